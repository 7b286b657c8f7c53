"""Forecast verification: masked errors, ice-edge error, anomaly correlation,
variability masks, and lead-by-target aggregation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import months as cal
from .data.gridio import GridSeries
from .errors import DataError

CELL_AREA_KM2 = 625.0  # 25 km x 25 km

UNITS = {
    "mae": "percent",
    "rmse": "percent",
    "acc": "dimensionless",
    "iiee": "km2",
    "oe": "km2",
    "ue": "km2",
}


def masked_error(pred: np.ndarray, obs: np.ndarray, mask: np.ndarray, kind: str = "mae") -> float:
    """Mean absolute or root-mean-square difference over masked cells, in percent."""
    if pred.shape != obs.shape or pred.shape != mask.shape:
        raise DataError(f"masked_error: shapes differ: {pred.shape}, {obs.shape}, {mask.shape}")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DataError("masked_error: empty mask")
    diff = (np.asarray(pred, dtype=np.float64) - obs)[mask]
    if kind == "mae":
        return float(np.abs(diff).mean() * 100.0)
    if kind == "rmse":
        return float(np.sqrt((diff**2).mean()) * 100.0)
    raise DataError(f"masked_error: unknown kind {kind!r}")


def iiee(
    pred: np.ndarray,
    obs: np.ndarray,
    mask: np.ndarray,
    threshold: float = 0.15,
    cell_area_km2: float = CELL_AREA_KM2,
) -> tuple[float, float, float]:
    """Ice-edge disagreement area split into overestimate and underestimate.

    OE counts cells forecast icy but observed open; UE the reverse; IIEE is
    their sum. Cells outside the mask (land) never contribute.
    """
    if not 0.0 < threshold < 1.0:
        raise DataError(f"iiee: threshold must lie in (0, 1), got {threshold}")
    mask = np.asarray(mask, dtype=bool)
    pi = np.asarray(pred) >= threshold
    oi = np.asarray(obs) >= threshold
    oe = float(np.count_nonzero(pi & ~oi & mask) * cell_area_km2)
    ue = float(np.count_nonzero(~pi & oi & mask) * cell_area_km2)
    return oe + ue, oe, ue


def acc(pred_anom: np.ndarray, obs_anom: np.ndarray, mask: np.ndarray) -> float:
    """Pearson correlation of the two anomaly fields over masked cells."""
    mask = np.asarray(mask, dtype=bool)
    if np.count_nonzero(mask) < 2:
        raise DataError("acc: need at least 2 masked cells")
    a = np.asarray(pred_anom, dtype=np.float64)[mask]
    b = np.asarray(obs_anom, dtype=np.float64)[mask]
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0:
        raise DataError("acc: zero variance over the mask")
    return float((a * b).sum() / denom)


def variability_mask(
    series: GridSeries, calendar_month: int, std_threshold: float = 0.10
) -> np.ndarray:
    """Cells whose interannual SIC standard deviation exceeds the threshold."""
    fields = [series.field(m) for m in series.months if cal.month_of(m) == calendar_month]
    if len(fields) < 3:
        raise DataError(
            f"variability_mask: {len(fields)} years of month {calendar_month:02d}, need 3"
        )
    std = np.std(np.stack(fields).astype(np.float64), axis=0)
    return (std > std_threshold) & ~series.land_mask


@dataclass
class MetricTable:
    """Scores keyed by (metric, init month, lead, target month, year)."""

    mask_id: str = "non_land"
    cell_area_km2: float = CELL_AREA_KM2
    entries: dict = field(default_factory=dict)

    def add(self, metric: str, init_month: int, lead: int, value: float) -> None:
        target = init_month + lead - 1
        key = (metric, init_month, lead, cal.month_of(target), cal.year_of(target))
        self.entries[key] = float(value)

    def values(self, metric: str) -> list[float]:
        return [v for (m, *_), v in self.entries.items() if m == metric]

    def mean(self, metric: str) -> float:
        vals = self.values(metric)
        if not vals:
            raise DataError(f"metric table has no {metric!r} entries")
        return float(np.mean(vals))

    def heatmap(self, metric: str, lead_count: int) -> np.ndarray:
        """[12, leads] mean over years; absent cells are NaN, never zero."""
        grid = np.full((12, lead_count), np.nan)
        for month in range(1, 13):
            for lead in range(1, lead_count + 1):
                vals = [
                    v
                    for (m, _init, l, tm, _y), v in self.entries.items()
                    if m == metric and l == lead and tm == month
                ]
                if vals:
                    grid[month - 1, lead - 1] = np.mean(vals)
        return grid

    def seasonal_cycle(self, metric: str) -> np.ndarray:
        """[12] mean over leads and years per target month; NaN where absent."""
        out = np.full(12, np.nan)
        for month in range(1, 13):
            vals = [
                v for (m, _i, _l, tm, _y), v in self.entries.items() if m == metric and tm == month
            ]
            if vals:
                out[month - 1] = np.mean(vals)
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["metric", "init_month", "lead", "target_month", "year", "value", "units", "mask"]
            )
            for (metric, init, lead, tmonth, year), value in sorted(self.entries.items()):
                writer.writerow(
                    [
                        metric,
                        cal.to_iso(init),
                        lead,
                        tmonth,
                        year,
                        repr(value),
                        UNITS.get(metric, "unknown"),
                        self.mask_id,
                    ]
                )


def write_heatmap_csv(path, table: MetricTable, metrics: list[str], lead_count: int) -> None:
    """Fig-2-style month-by-lead grids, one block per metric, absent cells empty."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "target_month"] + [f"lead_{l}" for l in range(1, lead_count + 1)] + ["units"])
        for metric in metrics:
            grid = table.heatmap(metric, lead_count)
            for month in range(1, 13):
                row = [metric, month]
                row += ["" if np.isnan(v) else repr(float(v)) for v in grid[month - 1]]
                row.append(UNITS.get(metric, "unknown"))
                writer.writerow(row)


def write_seasonal_csv(path, table: MetricTable, metrics: list[str]) -> None:
    """Fig-3-style seasonal cycles: one value per target month per metric."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "target_month", "value", "units"])
        for metric in metrics:
            cycle = table.seasonal_cycle(metric)
            for month in range(1, 13):
                v = cycle[month - 1]
                writer.writerow([metric, month, "" if np.isnan(v) else repr(float(v)), UNITS.get(metric, "unknown")])
