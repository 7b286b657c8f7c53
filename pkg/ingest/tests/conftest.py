"""Fixture builders: NSIDC-style netCDF, ERA5-style netCDF and GRIB2 samples."""

from __future__ import annotations

import struct

import h5py
import numpy as np
import pytest


def iso_range(start: str, end: str) -> list[str]:
    y0, m0 = (int(x) for x in start.split("-"))
    y1, m1 = (int(x) for x in end.split("-"))
    out = []
    for idx in range(y0 * 12 + m0 - 1, y1 * 12 + m1):
        out.append(f"{idx // 12:04d}-{idx % 12 + 1:02d}")
    return out


def write_nsidc_like(path, months: list[str], shape=(12, 10), seed=0):
    """Monthly SIC with land/coast/pole-hole flag values, CDR-flavoured."""
    rng = np.random.default_rng(seed)
    t = len(months)
    h, w = shape
    conc = rng.uniform(0, 1, size=(t, h, w)).astype(np.float32)
    land = np.zeros((h, w), dtype=bool)
    land[0, :] = True
    coast = np.zeros((h, w), dtype=bool)
    coast[1, 0] = True
    hole = np.zeros((h, w), dtype=bool)
    hole[h // 2, w // 2] = True
    conc[:, land] = 2.54
    conc[:, coast] = 2.53
    conc[:, hole] = 2.51
    base = int(months[0].split("-")[0]) * 12 + int(months[0].split("-")[1]) - 1
    offsets = [int(m.split("-")[0]) * 12 + int(m.split("-")[1]) - 1 - base for m in months]
    with h5py.File(path, "w") as fh:
        tvar = fh.create_dataset("time", data=np.asarray(offsets, dtype=np.float64))
        tvar.attrs["units"] = f"months since {months[0]}-01"
        lat = fh.create_dataset("latitude", data=np.linspace(60, 89, h))
        lon = fh.create_dataset("longitude", data=np.linspace(-180, 170, w))
        var = fh.create_dataset("cdr_seaice_conc_monthly", data=conc)
        var.attrs["units"] = "fraction"
        var.attrs["flag_values"] = np.array([2.51, 2.53, 2.54], dtype=np.float32)
        var.attrs["flag_meanings"] = "pole_hole coastline land"
        for name in ("time", "latitude", "longitude"):
            fh[name].make_scale(name)
        var.dims[0].attach_scale(fh["time"])
        var.dims[1].attach_scale(fh["latitude"])
        var.dims[2].attach_scale(fh["longitude"])
    return conc, land | coast, hole


def write_era5_like_nc(path, name: str, units: str, months: list[str], shape=(8, 16), seed=1):
    rng = np.random.default_rng(seed)
    t = len(months)
    h, w = shape
    data = rng.normal(270, 10, size=(t, h, w)).astype(np.float32)
    base = int(months[0].split("-")[0]) * 12 + int(months[0].split("-")[1]) - 1
    offsets = [int(m.split("-")[0]) * 12 + int(m.split("-")[1]) - 1 - base for m in months]
    with h5py.File(path, "w") as fh:
        tvar = fh.create_dataset("time", data=np.asarray(offsets, dtype=np.float64))
        tvar.attrs["units"] = f"months since {months[0]}-01"
        fh.create_dataset("latitude", data=np.linspace(90, 30, h))
        fh.create_dataset("longitude", data=np.arange(0, 360, 360 / w))
        var = fh.create_dataset(name, data=data)
        var.attrs["units"] = units
    return data


def _sm16(value: int) -> bytes:
    sign = 0x8000 if value < 0 else 0
    return struct.pack(">H", sign | abs(value))


def _sm32(value: int) -> bytes:
    sign = 0x80000000 if value < 0 else 0
    return struct.pack(">I", sign | abs(value))


def grib2_message(
    values: np.ndarray,
    lats: np.ndarray,
    lons: np.ndarray,
    year: int,
    month: int,
    discipline=0,
    category=0,
    parameter=0,
    nbits=16,
) -> bytes:
    """Encode one regular-lat-lon message with simple packing (templates 3.0/4.0/5.0)."""
    nj, ni = values.shape
    flat = values.astype(np.float64).ravel()
    reference = float(flat.min())
    span = float(flat.max() - reference)
    emax = (1 << nbits) - 1
    scale = span / emax if span > 0 else 1.0
    binary_scale = int(np.ceil(np.log2(scale))) if span > 0 else 0
    packed_vals = np.round((flat - reference) / 2.0**binary_scale).astype(np.int64)
    packed_vals = np.clip(packed_vals, 0, emax)

    bits = np.zeros((flat.size, nbits), dtype=np.uint8)
    for b in range(nbits):
        bits[:, b] = (packed_vals >> (nbits - 1 - b)) & 1
    payload = np.packbits(bits.ravel()).tobytes()

    sec1 = struct.pack(">IB", 21, 1) + struct.pack(
        ">HHBBBHBBBBBBB", 98, 0, 2, 1, 1, year, month, 1, 0, 0, 0, 0, 1
    )
    template3 = (
        bytes([6])  # shape of earth: spherical, radius specified
        + bytes([0]) + struct.pack(">I", 6371229)
        + bytes([0]) + struct.pack(">I", 0)
        + bytes([0]) + struct.pack(">I", 0)
        + struct.pack(">II", ni, nj)
        + struct.pack(">II", 0, 0)
        + _sm32(int(round(lats[0] * 1e6)))
        + _sm32(int(round(lons[0] * 1e6)))
        + bytes([48])
        + _sm32(int(round(lats[-1] * 1e6)))
        + _sm32(int(round(lons[-1] * 1e6)))
        + _sm32(int(round(abs(lons[1] - lons[0]) * 1e6)))
        + _sm32(int(round(abs(lats[1] - lats[0]) * 1e6)))
        + bytes([0])  # scan mode: +i, -j
    )
    sec3_body = struct.pack(">BIBBH", 0, ni * nj, 0, 0, 0) + template3
    sec3 = struct.pack(">IB", 5 + len(sec3_body), 3) + sec3_body
    template4 = struct.pack(
        ">BBBBBHBBIBBIBBI",
        category, parameter, 0, 0, 0, 0, 0, 1, 0, 255, 0, 0, 255, 0, 0,
    )
    sec4_body = struct.pack(">HH", 0, 0) + template4
    sec4 = struct.pack(">IB", 5 + len(sec4_body), 4) + sec4_body
    sec5_body = struct.pack(">IH", ni * nj, 0) + struct.pack(">f", reference) + _sm16(binary_scale) + _sm16(0) + bytes([nbits, 0])
    sec5 = struct.pack(">IB", 5 + len(sec5_body), 5) + sec5_body
    sec6 = struct.pack(">IBB", 6, 6, 255)
    sec7 = struct.pack(">IB", 5 + len(payload), 7) + payload

    body = sec1 + sec3 + sec4 + sec5 + sec6 + sec7
    total = 16 + len(body) + 4
    sec0 = b"GRIB" + b"\x00\x00" + bytes([discipline, 2]) + struct.pack(">Q", total)
    return sec0 + body + b"7777"


@pytest.fixture
def rng():
    return np.random.default_rng(7)
