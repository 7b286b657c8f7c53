"""Minimal GRIB2 reader for regular latitude-longitude monthly fields.

Covers the subset the reanalysis archives use here: grid definition template
3.0 (regular lat-lon), product definition template 4.0, data representation
template 5.0 (simple packing) with no bitmap. Anything else is rejected with
a clear diagnostic rather than guessed at.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError


@dataclass
class Grib2Message:
    discipline: int
    category: int
    parameter: int
    year: int
    month: int
    lats: np.ndarray
    lons: np.ndarray
    values: np.ndarray  # [nlat, nlon], row 0 at lat[0]

    @property
    def param_key(self) -> str:
        return f"{self.discipline}-{self.category}-{self.parameter}"

    @property
    def month_iso(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def _signed_magnitude(value: int, bits: int) -> int:
    sign_bit = 1 << (bits - 1)
    if value & sign_bit:
        return -(value & (sign_bit - 1))
    return value


def _s32(raw: bytes) -> int:
    return _signed_magnitude(struct.unpack(">I", raw)[0], 32)


def _s16(raw: bytes) -> int:
    return _signed_magnitude(struct.unpack(">H", raw)[0], 16)


def _unpack_bits(payload: bytes, nbits: int, count: int) -> np.ndarray:
    if nbits == 0:
        return np.zeros(count, dtype=np.float64)
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    if bits.size < nbits * count:
        raise FormatError(f"data section holds {bits.size} bits, need {nbits * count}")
    bits = bits[: nbits * count].reshape(count, nbits).astype(np.int64)
    weights = 1 << np.arange(nbits - 1, -1, -1, dtype=np.int64)
    return (bits * weights).sum(axis=1).astype(np.float64)


def _parse_message(buf: bytes, offset: int) -> tuple[Grib2Message, int]:
    if buf[offset : offset + 4] != b"GRIB":
        raise FormatError(f"no GRIB magic at byte {offset}")
    discipline = buf[offset + 6]
    edition = buf[offset + 7]
    if edition != 2:
        raise FormatError(f"GRIB edition {edition} unsupported (need 2)")
    (total_len,) = struct.unpack(">Q", buf[offset + 8 : offset + 16])
    end = offset + total_len
    if buf[end - 4 : end] != b"7777":
        raise FormatError("message does not end with 7777")

    pos = offset + 16
    sections: dict[int, bytes] = {}
    while pos < end - 4:
        (sec_len,) = struct.unpack(">I", buf[pos : pos + 4])
        sec_no = buf[pos + 4]
        sections[sec_no] = buf[pos : pos + sec_len]
        pos += sec_len

    for required in (1, 3, 4, 5, 7):
        if required not in sections:
            raise FormatError(f"message lacks section {required}")

    s1 = sections[1]
    year, month = struct.unpack(">H", s1[12:14])[0], s1[14]

    s3 = sections[3]
    template3 = struct.unpack(">H", s3[12:14])[0]
    if template3 != 0:
        raise FormatError(f"grid template 3.{template3} unsupported (need 3.0 lat-lon)")
    ni = struct.unpack(">I", s3[30:34])[0]
    nj = struct.unpack(">I", s3[34:38])[0]
    lat1 = _s32(s3[46:50]) / 1e6
    lon1 = _s32(s3[50:54]) / 1e6
    lat2 = _s32(s3[55:59]) / 1e6
    lon2 = _s32(s3[59:63]) / 1e6
    scan = s3[71]
    if scan not in (0, 64):
        raise FormatError(f"scanning mode {scan} unsupported")
    lats = np.linspace(lat1, lat2, nj)
    lons = np.linspace(lon1, lon2, ni)

    s4 = sections[4]
    template4 = struct.unpack(">H", s4[7:9])[0]
    if template4 != 0:
        raise FormatError(f"product template 4.{template4} unsupported (need 4.0)")
    category, parameter = s4[9], s4[10]

    s5 = sections[5]
    npoints = struct.unpack(">I", s5[5:9])[0]
    template5 = struct.unpack(">H", s5[9:11])[0]
    if template5 != 0:
        raise FormatError(f"packing template 5.{template5} unsupported (need 5.0 simple)")
    reference = struct.unpack(">f", s5[11:15])[0]
    binary_scale = _s16(s5[15:17])
    decimal_scale = _s16(s5[17:19])
    nbits = s5[19]

    if 6 in sections and sections[6][5] != 255:
        raise FormatError("bitmapped messages unsupported")
    if npoints != ni * nj:
        raise FormatError(f"point count {npoints} != Ni*Nj = {ni * nj}")

    packed = sections[7][5:]
    x = _unpack_bits(packed, nbits, npoints)
    values = (reference + x * 2.0**binary_scale) / 10.0**decimal_scale
    return (
        Grib2Message(
            discipline=discipline,
            category=category,
            parameter=parameter,
            year=year,
            month=month,
            lats=lats,
            lons=lons,
            values=values.reshape(nj, ni),
        ),
        end,
    )


def read_grib2(path) -> list[Grib2Message]:
    buf = open(path, "rb").read()
    if not buf.startswith(b"GRIB"):
        raise FormatError(f"{path}: not a GRIB file")
    messages = []
    offset = 0
    while offset < len(buf):
        message, offset = _parse_message(buf, offset)
        messages.append(message)
        while offset < len(buf) and buf[offset : offset + 4] != b"GRIB":
            offset += 1
    return messages
