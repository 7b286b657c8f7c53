"""Convert raw netCDF / GRIB2 archives into IMGR series plus a stats manifest.

The converter only reshapes, decodes, and indexes: no interpolation, no gap
filling, no anomaly arithmetic. Those belong to the forecasting package so
the numeric contract has a single home. Land and pole-hole cells are carried
as masks; their payload values are written as 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvertError, FormatError
from .grib2 import read_grib2
from .imgr import write_imgr
from .manifest import SourceManifest, VariableMapping
from .netcdf import months_from_time, read_netcdf


@dataclass
class ConvertedSeries:
    variable: str
    units: str
    months: list[str]
    fields: np.ndarray
    land_mask: np.ndarray
    pole_hole_mask: np.ndarray | None
    lats: np.ndarray | None
    lons: np.ndarray | None


def _month_index(iso: str) -> int:
    year, month = iso.split("-")
    return int(year) * 12 + int(month) - 1


def _check_contiguous(variable: str, months: list[str], start: str, end: str) -> None:
    want = list(range(_month_index(start), _month_index(end) + 1))
    have = sorted(_month_index(m) for m in months)
    if len(set(have)) != len(have):
        dupes = sorted({m for m in have if have.count(m) > 1})
        raise ConvertError(f"{variable}: duplicate months {[_iso(m) for m in dupes]}")
    missing = sorted(set(want) - set(have))
    if missing:
        raise ConvertError(
            f"{variable}: calendar gaps, missing {[_iso(m) for m in missing]}"
        )
    extra = sorted(set(have) - set(want))
    if extra:
        raise ConvertError(f"{variable}: months outside the manifest range {[_iso(m) for m in extra]}")


def _iso(index: int) -> str:
    return f"{index // 12:04d}-{index % 12 + 1:02d}"


def _check_units(mapping: VariableMapping, source_units: str | None) -> None:
    if source_units is None or mapping.scale != 1.0 or mapping.offset != 0.0:
        return
    if source_units.strip() and source_units.strip() != mapping.units:
        raise ConvertError(
            f"{mapping.target}: unit mismatch, source {source_units!r} vs "
            f"manifest {mapping.units!r} with no conversion declared"
        )


def _collect_netcdf(paths, manifest: SourceManifest) -> dict[str, ConvertedSeries]:
    per_var: dict[str, dict[int, np.ndarray]] = {}
    masks: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    axes: dict[str, tuple[np.ndarray | None, np.ndarray | None]] = {}
    units_seen: dict[str, str | None] = {}
    for path in paths:
        contents = read_netcdf(path)
        time_names = [n for n in contents if n.lower() in ("time", "t")]
        months = months_from_time(contents[time_names[0]]) if time_names else None
        lat_axis = next((contents[n].data for n in contents if n.lower() in ("latitude", "lat")), None)
        lon_axis = next((contents[n].data for n in contents if n.lower() in ("longitude", "lon")), None)
        for name, var in contents.items():
            mapping = manifest.mapping_for(name)
            if mapping is None:
                continue
            data = var.data
            if data.ndim == 2:
                data = data[None]
            if data.ndim != 3:
                raise FormatError(f"{name}: expected [time, y, x], got {data.shape}")
            if months is None or len(months) != data.shape[0]:
                raise FormatError(f"{name}: time axis does not match {data.shape[0]} fields")
            units_seen[mapping.target] = var.attrs.get("units")
            land = np.zeros(data.shape[1:], dtype=bool)
            hole = np.zeros(data.shape[1:], dtype=bool)
            if var.flags:
                for value, meaning in var.flags.items():
                    where = np.isclose(data, value)
                    lower = meaning.lower()
                    if "land" in lower or "coast" in lower:
                        land |= where.any(axis=0)
                    elif "pole" in lower:
                        hole |= where.any(axis=0)
                    data = np.where(where, np.nan, data)
            store = per_var.setdefault(mapping.target, {})
            for t, iso in enumerate(months):
                store[_month_index(iso)] = data[t]
            old_land, old_hole = masks.get(mapping.target, (land, hole))
            masks[mapping.target] = (old_land | land, old_hole | hole)
            axes[mapping.target] = (lat_axis, lon_axis)

    out = {}
    for mapping in manifest.variables:
        if mapping.target not in per_var:
            continue
        _check_units(mapping, units_seen.get(mapping.target))
        store = per_var[mapping.target]
        months_sorted = sorted(store)
        fields = np.stack([store[m] for m in months_sorted])
        fields = fields * mapping.scale + mapping.offset
        land, hole = masks[mapping.target]
        nan_left = np.isnan(fields)
        if nan_left.any():
            fields = np.where(nan_left & land[None], 0.0, fields)
            fields = np.where(nan_left & hole[None], 0.0, fields)
            if np.isnan(fields).any():
                bad = sorted({_iso(months_sorted[t]) for t in np.argwhere(np.isnan(fields))[:, 0]})
                raise ConvertError(f"{mapping.target}: unflagged missing values in {bad}")
        fields[:, land] = 0.0
        lat_axis, lon_axis = axes[mapping.target]
        out[mapping.target] = ConvertedSeries(
            variable=mapping.target,
            units=mapping.units,
            months=[_iso(m) for m in months_sorted],
            fields=fields.astype(np.float32),
            land_mask=land,
            pole_hole_mask=hole if hole.any() else None,
            lats=lat_axis,
            lons=lon_axis,
        )
    return out


def _collect_grib2(paths, manifest: SourceManifest) -> dict[str, ConvertedSeries]:
    per_var: dict[str, dict[int, np.ndarray]] = {}
    axes: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for path in paths:
        for message in read_grib2(path):
            mapping = manifest.mapping_for(message.param_key)
            if mapping is None:
                continue
            store = per_var.setdefault(mapping.target, {})
            store[_month_index(message.month_iso)] = message.values
            axes[mapping.target] = (message.lats, message.lons)
    out = {}
    for mapping in manifest.variables:
        if mapping.target not in per_var:
            continue
        store = per_var[mapping.target]
        months_sorted = sorted(store)
        fields = np.stack([store[m] for m in months_sorted]) * mapping.scale + mapping.offset
        lats, lons = axes[mapping.target]
        out[mapping.target] = ConvertedSeries(
            variable=mapping.target,
            units=mapping.units,
            months=[_iso(m) for m in months_sorted],
            fields=fields.astype(np.float32),
            land_mask=np.zeros(fields.shape[1:], dtype=bool),
            pole_hole_mask=None,
            lats=lats,
            lons=lons,
        )
    return out


def convert(raw_files, manifest: SourceManifest, out_dir) -> dict[str, Path]:
    """Produce <target>.imgr files, grid sidecars, and stats.json."""
    raw_files = [Path(p) for p in raw_files]
    if not raw_files:
        raise ConvertError("no raw files to convert")
    netcdf_files = [p for p in raw_files if p.suffix in (".nc", ".nc4", ".h5")]
    grib_files = [p for p in raw_files if p.suffix in (".grib", ".grib2", ".grb2")]
    unknown = set(raw_files) - set(netcdf_files) - set(grib_files)
    if unknown:
        raise FormatError(f"unrecognized raw file extensions: {sorted(p.name for p in unknown)}")

    series: dict[str, ConvertedSeries] = {}
    if netcdf_files:
        series.update(_collect_netcdf(netcdf_files, manifest))
    if grib_files:
        series.update(_collect_grib2(grib_files, manifest))
    missing = [vm.target for vm in manifest.variables if vm.target not in series]
    if missing:
        raise ConvertError(f"raw files held no data for {missing}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    stats: dict[str, dict] = {}
    for target, conv in series.items():
        _check_contiguous(target, conv.months, manifest.start, manifest.end)
        if target == "siconc":
            ocean = ~conv.land_mask
            vals = conv.fields[:, ocean]
            if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
                raise ConvertError(
                    f"siconc: converted values outside [0, 1] "
                    f"({vals.min():.3f}..{vals.max():.3f}); check the unit conversion"
                )
        path = out / f"{target}.imgr"
        write_imgr(
            path, conv.variable, conv.units, conv.months, conv.fields,
            conv.land_mask, conv.pole_hole_mask,
        )
        written[target] = path
        if conv.lats is not None and conv.lons is not None:
            grid_path = out / f"{target}.grid.json"
            grid_path.write_text(
                json.dumps(
                    {"lats": conv.lats.tolist(), "lons": conv.lons.tolist()},
                    indent=2,
                )
                + "\n"
            )
        ocean = ~conv.land_mask
        vals = conv.fields[:, ocean] if ocean.any() else conv.fields.reshape(len(conv.months), -1)
        stats[target] = {
            "mean": float(vals.mean()),
            "std": float(vals.std()),
            "climatology_file": None,
            "fit_window": [conv.months[0], conv.months[-1]],
        }
    stats_path = out / "stats.json"
    stats_path.write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    written["stats"] = stats_path
    return written
