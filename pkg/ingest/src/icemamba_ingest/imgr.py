"""Writer for the IMGR grid-series interchange format.

Layout: magic "IMGR1\n"; 4-byte little-endian header length; UTF-8 JSON
header {variable, units, shape [T,H,W], months ("YYYY-MM" list), masks,
precision}; land mask at 1 byte per cell; optional pole-hole mask; then
T*H*W little-endian 32-bit reals in [t, y, x] order.

This module deliberately re-implements the format from its specification:
the byte layout is the contract between the acquisition and forecasting
packages.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConvertError

MAGIC = b"IMGR1\n"


def write_imgr(
    path,
    variable: str,
    units: str,
    months: list[str],
    fields: np.ndarray,
    land_mask: np.ndarray,
    pole_hole_mask: np.ndarray | None = None,
) -> None:
    """Atomically write one series: temp file in the target directory, then rename."""
    fields = np.asarray(fields, dtype=np.float32)
    land_mask = np.asarray(land_mask, dtype=bool)
    if fields.ndim != 3:
        raise ConvertError(f"{variable}: fields must be [T,H,W], got {fields.shape}")
    if len(months) != fields.shape[0]:
        raise ConvertError(f"{variable}: {len(months)} months vs {fields.shape[0]} fields")
    if land_mask.shape != fields.shape[1:]:
        raise ConvertError(f"{variable}: land mask shape {land_mask.shape} mismatch")
    header = {
        "variable": variable,
        "units": units,
        "shape": list(fields.shape),
        "months": list(months),
        "masks": {"land": True, "pole_hole": pole_hole_mask is not None},
        "precision": "f32",
    }
    blob = json.dumps(header).encode("utf-8")
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(land_mask.astype(np.uint8).tobytes())
            if pole_hole_mask is not None:
                fh.write(np.asarray(pole_hole_mask, dtype=np.uint8).tobytes())
            fh.write(np.ascontiguousarray(fields, dtype="<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
