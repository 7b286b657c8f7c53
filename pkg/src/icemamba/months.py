"""Calendar month arithmetic.

A month id is ``year * 12 + (month - 1)`` so consecutive ids are consecutive
calendar months and differences are lead times in months.
"""

from __future__ import annotations

from .errors import DataError


def month_id(year: int, month: int) -> int:
    if not 1 <= month <= 12:
        raise DataError(f"month must be in 1..12, got {month}")
    return year * 12 + (month - 1)


def year_of(mid: int) -> int:
    return mid // 12


def month_of(mid: int) -> int:
    """Calendar month 1..12 of a month id."""
    return mid % 12 + 1


def to_iso(mid: int) -> str:
    return f"{year_of(mid):04d}-{month_of(mid):02d}"


def from_iso(text: str) -> int:
    parts = text.split("-")
    if len(parts) != 2:
        raise DataError(f"month must look like YYYY-MM, got {text!r}")
    try:
        year, month = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise DataError(f"month must look like YYYY-MM, got {text!r}") from exc
    return month_id(year, month)


def month_range(first: int, last: int) -> list[int]:
    """Inclusive list of month ids."""
    if last < first:
        raise DataError(f"empty month range {to_iso(first)}..{to_iso(last)}")
    return list(range(first, last + 1))
