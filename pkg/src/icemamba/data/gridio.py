"""GridSeries container and the IMGR on-disk format.

IMGR layout: magic "IMGR1\n", a 4-byte little-endian header length, a UTF-8
JSON header (variable, units, shape [T,H,W], months as "YYYY-MM" strings,
mask presence flags, precision), the land mask at 1 byte per cell, the
optional pole-hole mask, then T*H*W little-endian reals in [t, y, x] order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import months as cal
from ..errors import DataError

MAGIC = b"IMGR1\n"
_WIRE = {"f32": "<f4", "f64": "<f8"}


@dataclass
class GridSeries:
    """A time-ordered stack of 2-D fields on one grid, with masks."""

    variable: str
    units: str
    months: list[int]
    fields: np.ndarray  # [T, H, W]
    land_mask: np.ndarray  # [H, W] bool
    pole_hole_mask: np.ndarray | None = None

    def __post_init__(self):
        self.fields = np.asarray(self.fields)
        self.land_mask = np.asarray(self.land_mask, dtype=bool)
        if self.fields.ndim != 3:
            raise DataError(f"{self.variable}: fields must be [T,H,W], got {self.fields.shape}")
        if len(self.months) != self.fields.shape[0]:
            raise DataError(
                f"{self.variable}: {len(self.months)} months vs {self.fields.shape[0]} fields"
            )
        if self.land_mask.shape != self.fields.shape[1:]:
            raise DataError(
                f"{self.variable}: land mask {self.land_mask.shape} vs grid {self.fields.shape[1:]}"
            )
        if self.pole_hole_mask is not None:
            self.pole_hole_mask = np.asarray(self.pole_hole_mask, dtype=bool)
            if self.pole_hole_mask.shape != self.land_mask.shape:
                raise DataError(f"{self.variable}: pole-hole mask shape mismatch")
        self._index = {m: i for i, m in enumerate(self.months)}

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.fields.shape[1:]

    def has_month(self, mid: int) -> bool:
        return mid in self._index

    def field(self, mid: int) -> np.ndarray:
        try:
            return self.fields[self._index[mid]]
        except KeyError:
            raise DataError(f"{self.variable}: month {cal.to_iso(mid)} not in series") from None

    def months_before(self, mid: int) -> list[int]:
        return [m for m in self.months if m < mid]

    def subset(self, month_ids: list[int]) -> "GridSeries":
        idx = [self._index[m] for m in month_ids]
        return GridSeries(
            self.variable,
            self.units,
            list(month_ids),
            self.fields[idx].copy(),
            self.land_mask,
            self.pole_hole_mask,
        )

    def copy_with(self, fields: np.ndarray) -> "GridSeries":
        return GridSeries(
            self.variable, self.units, list(self.months), fields, self.land_mask, self.pole_hole_mask
        )


def write_imgr(series: GridSeries, path) -> None:
    precision = "f64" if series.fields.dtype == np.float64 else "f32"
    header = {
        "variable": series.variable,
        "units": series.units,
        "shape": list(series.fields.shape),
        "months": [cal.to_iso(m) for m in series.months],
        "masks": {"land": True, "pole_hole": series.pole_hole_mask is not None},
        "precision": precision,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(series.land_mask.astype(np.uint8).tobytes())
        if series.pole_hole_mask is not None:
            fh.write(series.pole_hole_mask.astype(np.uint8).tobytes())
        fh.write(np.ascontiguousarray(series.fields, dtype=_WIRE[precision]).tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) < n:
        raise DataError(f"truncated payload while reading {what}")
    return buf


def read_imgr(path) -> GridSeries:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataError(f"bad magic {magic!r} in {Path(path).name}")
        (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        try:
            header = json.loads(_read_exact(fh, hlen, "header").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"unreadable header: {exc}") from exc
        try:
            t, h, w = header["shape"]
            months = [cal.from_iso(s) for s in header["months"]]
            precision = header["precision"]
            masks = header["masks"]
            variable = header["variable"]
            units = header["units"]
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"header mismatch: missing or malformed key ({exc})") from exc
        if precision not in _WIRE:
            raise DataError(f"header mismatch: unknown precision {precision!r}")
        if len(months) != t:
            raise DataError(f"header mismatch: {len(months)} months vs shape T={t}")
        land = np.frombuffer(_read_exact(fh, h * w, "land mask"), dtype=np.uint8)
        land = land.reshape(h, w).astype(bool)
        hole = None
        if masks.get("pole_hole"):
            hole = np.frombuffer(_read_exact(fh, h * w, "pole-hole mask"), dtype=np.uint8)
            hole = hole.reshape(h, w).astype(bool)
        itemsize = 4 if precision == "f32" else 8
        raw = _read_exact(fh, t * h * w * itemsize, "field values")
        fields = np.frombuffer(raw, dtype=_WIRE[precision]).reshape(t, h, w)
        fields = fields.astype(np.float32 if precision == "f32" else np.float64)
        if fh.read(1):
            raise DataError("header mismatch: trailing bytes after field values")
    return GridSeries(variable, units, months, fields, land, hole)
