"""Minimal netCDF-4 reading on top of h5py.

netCDF-4 files are HDF5 files with naming conventions; this reader covers
what the monthly archives need: named variables with dimension scales,
scale_factor/add_offset/_FillValue decoding, flag tables, and "since"-style
time units.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import h5py
import numpy as np

from .errors import FormatError


@dataclass
class NcVariable:
    name: str
    data: np.ndarray  # decoded to float64, NaN where fill
    dims: tuple[str, ...]
    attrs: dict = field(default_factory=dict)
    flags: dict[float, str] = field(default_factory=dict)  # raw flag value -> meaning


def _decode_attr(value):
    if isinstance(value, bytes):
        return value.decode("utf-8", "replace")
    if isinstance(value, np.ndarray) and value.size == 1:
        return value.item()
    return value


def _dims_of(ds: h5py.Dataset) -> tuple[str, ...]:
    names = []
    for i, dim in enumerate(ds.dims):
        label = dim.label
        if not label and len(dim) > 0:
            label = dim[0].name.rsplit("/", 1)[-1]
        names.append(label or f"dim{i}")
    return tuple(names)


def read_netcdf(path, variables: list[str] | None = None) -> dict[str, NcVariable]:
    """Read the named variables (or all datasets) with decoding applied."""
    out: dict[str, NcVariable] = {}
    try:
        handle = h5py.File(path, "r")
    except OSError as exc:
        raise FormatError(f"{path}: not a readable netCDF-4/HDF5 file ({exc})") from exc
    with handle:
        names = variables if variables is not None else [
            k for k, v in handle.items() if isinstance(v, h5py.Dataset)
        ]
        for name in names:
            if name not in handle:
                raise FormatError(f"{path}: no variable {name!r}")
            ds = handle[name]
            attrs = {k: _decode_attr(v) for k, v in ds.attrs.items()}
            raw = ds[()]
            data = np.asarray(raw, dtype=np.float64)
            fill = attrs.get("_FillValue")
            if fill is not None:
                data = np.where(np.asarray(raw) == fill, np.nan, data)
            flags = {}
            if "flag_values" in attrs and "flag_meanings" in attrs:
                values = np.atleast_1d(np.asarray(ds.attrs["flag_values"])).astype(np.float64)
                meanings = str(_decode_attr(ds.attrs["flag_meanings"])).split()
                flags = dict(zip(values.tolist(), meanings))
            scale = float(attrs.get("scale_factor", 1.0))
            offset = float(attrs.get("add_offset", 0.0))
            if scale != 1.0 or offset != 0.0:
                decoded = data * scale + offset
                # flag codes are defined on the raw values; keep them raw
                if flags:
                    raw_f = np.asarray(raw, dtype=np.float64)
                    is_flag = np.isin(raw_f, list(flags))
                    decoded = np.where(is_flag, raw_f, decoded)
                data = decoded
            out[name] = NcVariable(name, data, _dims_of(ds), attrs, flags)
    return out


_SINCE = re.compile(r"(\w+)\s+since\s+(\d{4})-(\d{2})-(\d{2})")


def months_from_time(var: NcVariable) -> list[str]:
    """Decode a CF-style time coordinate to "YYYY-MM" strings (monthly data)."""
    units = str(var.attrs.get("units", ""))
    match = _SINCE.match(units)
    if not match:
        raise FormatError(f"time units {units!r} are not '<unit> since <date>'")
    unit, y0, m0, _d0 = match.group(1).lower(), int(match.group(2)), int(match.group(3)), match.group(4)
    out = []
    for value in np.atleast_1d(var.data):
        if unit.startswith("month"):
            total = (y0 * 12 + m0 - 1) + int(round(float(value)))
        elif unit.startswith("day"):
            # monthly means sit mid-month; resolve by walking whole days
            total = (y0 * 12 + m0 - 1) + int(float(value) // 30.44)
        elif unit.startswith("hour"):
            total = (y0 * 12 + m0 - 1) + int(float(value) / 24 // 30.44)
        elif unit.startswith("second"):
            total = (y0 * 12 + m0 - 1) + int(float(value) / 86400 // 30.44)
        else:
            raise FormatError(f"unsupported time unit {unit!r}")
        out.append(f"{total // 12:04d}-{total % 12 + 1:02d}")
    return out
