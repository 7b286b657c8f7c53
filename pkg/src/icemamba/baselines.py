"""Reference forecasts: anomaly persistence, damped persistence, trend climatology."""

from __future__ import annotations

import numpy as np

from . import months as cal
from .data.gridio import GridSeries
from .errors import DataError
from .model import ForecastSet


def _finish(maps: np.ndarray, land: np.ndarray, init_month: int) -> ForecastSet:
    maps = np.clip(maps, 0.0, 1.0)
    maps[:, land] = 0.0
    return ForecastSet(init_month=init_month, maps=maps)


def _occurrences_before(series: GridSeries, calendar_month: int, before: int) -> list[int]:
    return [m for m in series.months if m < before and cal.month_of(m) == calendar_month]


def sliding_climatology(
    series: GridSeries, calendar_month: int, before: int, window_years: int = 10
) -> np.ndarray:
    """Mean field of the last window_years occurrences of a calendar month before `before`."""
    occ = _occurrences_before(series, calendar_month, before)
    if len(occ) < window_years:
        raise DataError(
            f"climatology window: only {len(occ)} {calendar_month:02d}-months before "
            f"{cal.to_iso(before)}, need {window_years}"
        )
    chosen = occ[-window_years:]
    return np.mean([series.field(m) for m in chosen], axis=0)


def anomaly_persistence(
    series: GridSeries, init_month: int, leads: int, window_years: int = 10
) -> ForecastSet:
    """Last month's anomaly added to each target month's sliding climatology."""
    last = init_month - 1
    if not series.has_month(last):
        raise DataError(f"anomaly persistence: no observation at {cal.to_iso(last)}")
    # the last observation's own climatology excludes that observation
    last_clim = sliding_climatology(series, cal.month_of(last), last, window_years)
    anomaly = series.field(last) - last_clim
    maps = []
    for lead in range(1, leads + 1):
        target = init_month + lead - 1
        clim = sliding_climatology(series, cal.month_of(target), init_month, window_years)
        maps.append(clim + anomaly)
    return _finish(np.stack(maps), series.land_mask, init_month)


def _history_anomalies(series: GridSeries, before: int) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Per-calendar-month mean over all months before `before`, and anomalies keyed by month id."""
    clim: dict[int, np.ndarray] = {}
    for month in range(1, 13):
        occ = _occurrences_before(series, month, before)
        if occ:
            clim[month] = np.mean([series.field(m) for m in occ], axis=0)
    anoms = {
        m: series.field(m) - clim[cal.month_of(m)]
        for m in series.months
        if m < before and cal.month_of(m) in clim
    }
    return clim, anoms


def damped_persistence(
    series: GridSeries,
    init_month: int,
    leads: int,
    window_years: int = 10,
    min_pairs: int = 10,
) -> ForecastSet:
    """Anomaly persistence with the anomaly damped by the historical lag correlation.

    The damping factor at lead l is the per-cell correlation between
    anomalies of the last-observed calendar month and anomalies of the
    target calendar month l months later, over all prior years, clipped to
    [0, 1].
    """
    last = init_month - 1
    if not series.has_month(last):
        raise DataError(f"damped persistence: no observation at {cal.to_iso(last)}")
    _, anoms = _history_anomalies(series, init_month)
    last_clim = sliding_climatology(series, cal.month_of(last), last, window_years)
    last_anom = series.field(last) - last_clim
    maps = []
    for lead in range(1, leads + 1):
        target = init_month + lead - 1
        pairs = [
            (anoms[m - lead], anoms[m])
            for m in anoms
            if cal.month_of(m) == cal.month_of(target) and (m - lead) in anoms
        ]
        if len(pairs) < min_pairs:
            raise DataError(
                f"damped persistence: {len(pairs)} historical pairs at lead {lead}, "
                f"need {min_pairs}"
            )
        a = np.stack([p[0] for p in pairs])
        b = np.stack([p[1] for p in pairs])
        a = a - a.mean(axis=0)
        b = b - b.mean(axis=0)
        denom = np.sqrt((a * a).sum(axis=0) * (b * b).sum(axis=0))
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(denom > 0, (a * b).sum(axis=0) / np.where(denom > 0, denom, 1.0), 0.0)
        r = np.clip(r, 0.0, 1.0)
        clim = sliding_climatology(series, cal.month_of(target), init_month, window_years)
        maps.append(clim + r * last_anom)
    return _finish(np.stack(maps), series.land_mask, init_month)


def trend_climatology(series: GridSeries, init_month: int, leads: int) -> ForecastSet:
    """Per-cell linear fit over prior years of the target calendar month, extrapolated."""
    maps = []
    for lead in range(1, leads + 1):
        target = init_month + lead - 1
        occ = _occurrences_before(series, cal.month_of(target), init_month)
        if len(occ) < 3:
            raise DataError(
                f"trend climatology: {len(occ)} prior {cal.month_of(target):02d}-months, need 3"
            )
        years = np.array([cal.year_of(m) for m in occ], dtype=np.float64)
        vals = np.stack([series.field(m) for m in occ]).astype(np.float64)
        yc = years - years.mean()
        flat = vals.reshape(years.size, -1)
        slope = (yc @ flat) / (yc @ yc)
        intercept = flat.mean(axis=0)
        predicted = intercept + slope * (cal.year_of(target) - years.mean())
        maps.append(predicted.reshape(series.grid_shape))
    return _finish(np.stack(maps), series.land_mask, init_month)
