"""Preprocessing, sample assembly, temporal splits, and detrending."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .. import months as cal
from ..errors import DataError
from .gridio import GridSeries

VARIABLE_GROUPS = {
    "siconc": "sea ice",
    "t2m": "atmospheric temperature",
    "t500": "atmospheric temperature",
    "sst": "ocean",
    "ohc300": "ocean",
    "ohc700": "ocean",
    "mld001": "ocean",
    "mld003": "ocean",
    "ussr": "radiation",
    "dssr": "radiation",
    "gp500": "pressure",
    "gp250": "pressure",
    "slp": "pressure",
    "u10m": "wind",
    "v10m": "wind",
    "u10": "wind",
}

# variables carried as anomalies by default; the rest are raw + normalized
_ANOMALY_DEFAULT = ("ohc300", "ohc700", "mld001", "mld003", "u10", "gp500", "gp250")


@dataclass(frozen=True)
class VariableSpec:
    """How one input variable enters the sample stack."""

    id: str
    lag_count: int
    anomaly: bool = False
    normalize: bool = True

    def __post_init__(self):
        if self.id not in VARIABLE_GROUPS:
            raise DataError(f"unknown variable id {self.id!r}")
        if self.id == "siconc":
            if self.lag_count != 12:
                raise DataError("siconc must use 12 monthly lags")
        elif self.lag_count not in (1, 3):
            raise DataError(f"{self.id}: lag_count must be 1 or 3, got {self.lag_count}")

    @property
    def group(self) -> str:
        return VARIABLE_GROUPS[self.id]


def default_specs(ids: list[str]) -> list[VariableSpec]:
    """Conventional per-variable settings: SIC raw, listed anomaly variables, rest normalized."""
    specs = []
    for vid in ids:
        if vid == "siconc":
            specs.append(VariableSpec("siconc", 12, anomaly=False, normalize=False))
        else:
            specs.append(VariableSpec(vid, 3, anomaly=vid in _ANOMALY_DEFAULT, normalize=True))
    return specs


# -- masks -------------------------------------------------------------------


def fill_pole_hole(field: np.ndarray, hole_mask: np.ndarray, land_mask: np.ndarray) -> np.ndarray:
    """Fill the unobserved polar cap from the mean of its surrounding ring.

    Works inward ring by ring: every hole cell adjacent to an already-known
    non-land cell takes the mean of those neighbors (8-neighborhood).
    """
    field = np.asarray(field, dtype=np.float64).copy()
    hole = np.asarray(hole_mask, dtype=bool).copy()
    land = np.asarray(land_mask, dtype=bool)
    if not hole.any():
        return field
    known = ~hole & ~land
    offsets = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    while hole.any():
        total = np.zeros_like(field)
        count = np.zeros(field.shape, dtype=np.int32)
        for dy, dx in offsets:
            nb_known = np.roll(known, (dy, dx), axis=(0, 1))
            nb_vals = np.roll(field, (dy, dx), axis=(0, 1))
            if dy == -1:
                nb_known[-1, :] = False
            elif dy == 1:
                nb_known[0, :] = False
            if dx == -1:
                nb_known[:, -1] = False
            elif dx == 1:
                nb_known[:, 0] = False
            take = nb_known & hole
            total[take] += nb_vals[take]
            count[take] += 1
        ring = (count > 0) & hole
        if not ring.any():
            raise DataError("pole hole touches only land; nothing to average from")
        field[ring] = total[ring] / count[ring]
        known |= ring
        hole &= ~ring
    return field


# -- climatology / anomalies / normalization ----------------------------------


def climatology_and_anomaly(
    series: GridSeries, fit_months: list[int]
) -> tuple[dict[int, np.ndarray], GridSeries]:
    """Per-calendar-month mean over the fit window, and the anomaly series."""
    fit = [m for m in fit_months if series.has_month(m)]
    clim: dict[int, np.ndarray] = {}
    for month in range(1, 13):
        sample = [series.field(m) for m in fit if cal.month_of(m) == month]
        if not sample:
            raise DataError(
                f"{series.variable}: no {month:02d}-month sample inside the fit window"
            )
        clim[month] = np.mean(sample, axis=0)
    anoms = np.stack(
        [series.field(m) - clim[cal.month_of(m)] for m in series.months]
    ).astype(series.fields.dtype)
    return clim, series.copy_with(anoms)


@dataclass
class NormStats:
    """Per-variable scalar moments plus monthly climatologies from one fit window."""

    fit_months: tuple[int, int]  # first, last month id of the window
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)
    climatology: dict[str, dict[int, np.ndarray]] = field(default_factory=dict)

    def stats_id(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.fit_months).encode())
        for vid in sorted(self.mean):
            h.update(f"{vid}:{self.mean[vid]!r}:{self.std[vid]!r}".encode())
        return h.hexdigest()[:16]


def fit_norm_stats(
    series_map: dict[str, GridSeries], specs: list[VariableSpec], fit_months: list[int]
) -> NormStats:
    stats = NormStats(fit_months=(min(fit_months), max(fit_months)))
    for spec in specs:
        series = series_map[spec.id]
        fit = [m for m in fit_months if series.has_month(m)]
        if not fit:
            raise DataError(f"{spec.id}: fit window has no data")
        if spec.anomaly:
            clim, series = climatology_and_anomaly(series, fit)
            stats.climatology[spec.id] = clim
        sample = np.stack([series.field(m) for m in fit])
        ocean = ~series.land_mask
        vals = sample[:, ocean]
        stats.mean[spec.id] = float(vals.mean())
        stats.std[spec.id] = float(vals.std())
    return stats


def normalize(series: GridSeries, stats: NormStats) -> GridSeries:
    """(x - mean) / std with the moments fitted on the training window."""
    std = stats.std.get(series.variable)
    if std is None:
        raise DataError(f"{series.variable}: no fitted statistics")
    if std <= 0:
        raise DataError(f"{series.variable}: zero standard deviation in the fit window")
    mean = stats.mean[series.variable]
    out = ((series.fields - mean) / std).astype(series.fields.dtype)
    return series.copy_with(out)


def preprocess(
    series_map: dict[str, GridSeries], specs: list[VariableSpec], fit_months: list[int]
) -> tuple[dict[str, GridSeries], NormStats]:
    """Land-zero SIC, fill pole holes, take anomalies, normalize; stats from the fit window."""
    prepared: dict[str, GridSeries] = {}
    sic = series_map["siconc"]
    fields = sic.fields.copy()
    if sic.pole_hole_mask is not None and sic.pole_hole_mask.any():
        for t in range(fields.shape[0]):
            fields[t] = fill_pole_hole(fields[t], sic.pole_hole_mask, sic.land_mask)
    fields = np.clip(fields, 0.0, 1.0)
    fields[:, sic.land_mask] = 0.0
    prepared["siconc"] = sic.copy_with(fields.astype(sic.fields.dtype))

    stats = fit_norm_stats({**series_map, "siconc": prepared["siconc"]}, specs, fit_months)
    for spec in specs:
        if spec.id == "siconc":
            continue
        series = series_map[spec.id]
        if spec.anomaly:
            clim = stats.climatology[spec.id]
            anoms = np.stack(
                [series.field(m) - clim[cal.month_of(m)] for m in series.months]
            ).astype(series.fields.dtype)
            series = series.copy_with(anoms)
        if spec.normalize:
            series = normalize(series, stats)
        prepared[spec.id] = series
    return prepared, stats


# -- sample assembly -----------------------------------------------------------


@dataclass
class AssembledSample:
    """Channel-fused input stack for one initialization month."""

    init_month: int
    channels: np.ndarray  # [C, H, W]
    land_mask: np.ndarray  # [H, W] bool
    layout: list[tuple[str, int]]  # (variable, lag) per channel

    def channel_index(self, variable: str, lag: int) -> int:
        try:
            return self.layout.index((variable, lag))
        except ValueError:
            raise DataError(f"no channel for ({variable}, lag {lag})") from None


def assemble_sample(
    init_month: int,
    specs: list[VariableSpec],
    series_map: dict[str, GridSeries],
    dtype=np.float32,
) -> AssembledSample:
    """Stack siconc lags 1..12 then each other variable's lags, in spec order."""
    ordered = [s for s in specs if s.id == "siconc"] + [s for s in specs if s.id != "siconc"]
    if not ordered or ordered[0].id != "siconc":
        raise DataError("assemble_sample: specs must include siconc")
    planes: list[np.ndarray] = []
    layout: list[tuple[str, int]] = []
    for spec in ordered:
        series = series_map[spec.id]
        for lag in range(1, spec.lag_count + 1):
            mid = init_month - lag
            if not series.has_month(mid):
                raise DataError(
                    f"assemble_sample: {spec.id} lacks {cal.to_iso(mid)} "
                    f"(lag {lag} before {cal.to_iso(init_month)})"
                )
            planes.append(series.field(mid))
            layout.append((spec.id, lag))
    land = series_map["siconc"].land_mask
    return AssembledSample(
        init_month=init_month,
        channels=np.stack(planes).astype(dtype),
        land_mask=land,
        layout=layout,
    )


def channel_count(specs: list[VariableSpec]) -> int:
    return sum(s.lag_count for s in specs)


# -- temporal splits -------------------------------------------------------------


@dataclass(frozen=True)
class Splits:
    """Disjoint, gap-free year ranges (ranges are half-open like Python's range)."""

    train_years: range
    valid_years: range
    test_years: range

    def __post_init__(self):
        if self.train_years.stop != self.valid_years.start:
            raise DataError("splits: train and valid ranges must be contiguous")
        if self.test_years and self.valid_years.stop != self.test_years.start:
            raise DataError("splits: valid and test ranges must be contiguous")


def make_splits(
    mode: str,
    target_year: int | None = None,
    data_start: int = 1979,
    data_end: int = 2022,
) -> Splits:
    """Fixed split (train through 2010, valid through 2014, test through 2022)
    or the rolling recalibration rule: train data_start..Y-5, valid Y-4..Y-1,
    test the target year itself.
    """
    if mode == "fixed":
        if data_start != 1979 or data_end != 2022:
            raise DataError("fixed mode is defined for the 1979-2022 record")
        return Splits(range(1979, 2011), range(2011, 2015), range(2015, 2023))
    if mode == "rolling":
        if target_year is None:
            raise DataError("rolling mode needs a target year")
        if target_year - 5 < data_start:
            raise DataError(
                f"rolling: target year {target_year} leaves no training window "
                f"(data starts {data_start})"
            )
        if target_year > data_end:
            raise DataError(f"rolling: target year {target_year} beyond data end {data_end}")
        return Splits(
            range(data_start, target_year - 4),
            range(target_year - 4, target_year),
            range(target_year, target_year + 1),
        )
    raise DataError(f"unknown split mode {mode!r}")


def years_to_months(years: range) -> list[int]:
    return [cal.month_id(y, m) for y in years for m in range(1, 13)]


# -- detrending -------------------------------------------------------------------


def detrend_linear(series: GridSeries) -> GridSeries:
    """Remove the per-cell least-squares linear trend over the time axis."""
    t = np.asarray(series.months, dtype=np.float64)
    if t.size < 3:
        raise DataError(f"{series.variable}: need at least 3 time points to detrend")
    if np.ptp(t) == 0:
        raise DataError(f"{series.variable}: time axis is constant")
    tc = t - t.mean()
    fields = series.fields.astype(np.float64)
    flat = fields.reshape(t.size, -1)
    slope = (tc @ flat) / (tc @ tc)
    intercept = flat.mean(axis=0)
    resid = flat - (np.outer(tc, slope) + intercept)
    return series.copy_with(resid.reshape(fields.shape).astype(series.fields.dtype))
