"""Permute-and-predict channel importance and the detrended-retrain driver."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import months as cal
from .data.pipeline import detrend_linear, preprocess, years_to_months
from .errors import DataError
from .metrics import masked_error
from .model import build_model, forecast_direct
from .training import ForecastSample, TrainValSplit, build_forecast_samples, train_loop


def worker_count(default: int = 1) -> int:
    """Worker parallelism, capped by ICEMAMBA_THREADS."""
    cap = os.environ.get("ICEMAMBA_THREADS")
    if cap is None:
        return default
    try:
        return max(1, int(cap))
    except ValueError:
        raise DataError(f"ICEMAMBA_THREADS must be an integer, got {cap!r}") from None


def importance_seeds(master_seed: int, count: int = 10) -> list[int]:
    rng = np.random.default_rng(master_seed)
    return [int(s) for s in rng.integers(0, 2**31 - 1, size=count)]


@dataclass
class ImportanceTable:
    """Mean MAE change per (variable, lag) by lead and by target month."""

    seeds: list[int]
    # (variable, lag, axis, axis_value) -> [mean delta, seed std, baseline mae]
    entries: dict = field(default_factory=dict)

    def add(self, variable, lag, axis, axis_value, delta, std, baseline):
        self.entries[(variable, lag, axis, axis_value)] = (
            float(delta),
            float(std),
            float(baseline),
        )

    def delta(self, variable, lag, axis, axis_value) -> float:
        return self.entries[(variable, lag, axis, axis_value)][0]

    def mean_delta(self, variable, lag, axis="lead") -> float:
        vals = [
            v[0]
            for (var, lg, ax, _), v in self.entries.items()
            if var == variable and lg == lag and ax == axis
        ]
        if not vals:
            raise DataError(f"no importance entries for ({variable}, {lag})")
        return float(np.mean(vals))

    def variable_mean(self, variable: str, axis: str = "lead") -> float:
        lags = {lg for (var, lg, ax, _) in self.entries if var == variable and ax == axis}
        if not lags:
            raise DataError(f"no importance entries for {variable}")
        return float(np.mean([self.mean_delta(variable, lg, axis) for lg in sorted(lags)]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["variable", "lag", "axis", "axis_value", "delta_mae_percent", "seed_std"])
            for (var, lag, axis, value), (delta, std, _base) in sorted(self.entries.items()):
                writer.writerow([var, lag, axis, value, repr(delta), repr(std)])


def _per_sample_maes(model, samples: list[ForecastSample]) -> np.ndarray:
    """[n_samples, k] masked MAE in percent, via the evaluation module's metric."""
    out = np.empty((len(samples), samples[0].targets.shape[0]))
    for j, sample in enumerate(samples):
        fc = forecast_direct(model, sample.inputs)
        ocean = ~sample.inputs.land_mask
        for lead in fc.lead_times:
            out[j, lead - 1] = masked_error(
                fc.map_for_lead(lead), sample.targets[lead - 1], ocean, "mae"
            )
    return out


def _grouped(deltas: np.ndarray, samples: list[ForecastSample]):
    """Collapse a [n_samples, k] matrix to per-lead and per-target-month means."""
    k = deltas.shape[1]
    by_lead = {lead: float(deltas[:, lead - 1].mean()) for lead in range(1, k + 1)}
    by_month: dict[int, list[float]] = {}
    for j, sample in enumerate(samples):
        for lead in range(1, k + 1):
            month = cal.month_of(sample.inputs.init_month + lead - 1)
            by_month.setdefault(month, []).append(float(deltas[j, lead - 1]))
    return by_lead, {m: float(np.mean(v)) for m, v in by_month.items()}


def permute_importance(
    model,
    samples: list[ForecastSample],
    variable: str,
    lag: int,
    seeds: list[int],
    baseline: np.ndarray | None = None,
    threads: int | None = None,
) -> ImportanceTable:
    """Shuffle one (variable, lag) channel across initialization months.

    Each seed permutes whole 2-D fields between the given samples, leaving
    every other channel untouched; the MAE change against the unpermuted
    baseline is averaged over seeds and split out by lead and target month.
    """
    if not samples:
        raise DataError("permute_importance: no samples")
    ci = samples[0].inputs.channel_index(variable, lag)
    if baseline is None:
        baseline = _per_sample_maes(model, samples)
    planes = [s.inputs.channels[ci] for s in samples]

    def one_seed(seed: int) -> np.ndarray:
        perm = np.random.default_rng(seed).permutation(len(samples))
        maes = np.empty_like(baseline)
        for j, sample in enumerate(samples):
            channels = sample.inputs.channels.copy()
            channels[ci] = planes[int(perm[j])]
            swapped = ForecastSample(
                inputs=type(sample.inputs)(
                    sample.inputs.init_month, channels, sample.inputs.land_mask, sample.inputs.layout
                ),
                targets=sample.targets,
            )
            maes[j] = _per_sample_maes(model, [swapped])[0]
        return maes

    n_workers = threads if threads is not None else worker_count()
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            per_seed = list(pool.map(one_seed, seeds))
    else:
        per_seed = [one_seed(s) for s in seeds]

    deltas = np.stack([m - baseline for m in per_seed])  # [seeds, n, k]
    table = ImportanceTable(seeds=list(seeds))
    mean_by_lead, mean_by_month = _grouped(deltas.mean(axis=0), samples)
    base_by_lead, base_by_month = _grouped(baseline, samples)
    seed_lead = np.stack([_seed_lead_means(d) for d in deltas])  # [seeds, k]
    for lead, delta in mean_by_lead.items():
        table.add(
            variable, lag, "lead", lead, delta, seed_lead[:, lead - 1].std(), base_by_lead[lead]
        )
    seed_month = [
        {m: v for m, v in _grouped(d, samples)[1].items()} for d in deltas
    ]
    for month, delta in mean_by_month.items():
        spread = np.std([sm[month] for sm in seed_month])
        table.add(variable, lag, "target_month", month, delta, spread, base_by_month[month])
    return table


def _seed_lead_means(deltas: np.ndarray) -> np.ndarray:
    return deltas.mean(axis=0)


def run_importance(
    model,
    samples: list[ForecastSample],
    seeds: list[int],
    pairs: list[tuple[str, int]] | None = None,
    threads: int | None = None,
) -> ImportanceTable:
    """Importance for every (variable, lag) channel, sharing one baseline."""
    if not samples:
        raise DataError("run_importance: no samples")
    baseline = _per_sample_maes(model, samples)
    layout = samples[0].inputs.layout if pairs is None else pairs
    merged = ImportanceTable(seeds=list(seeds))
    for variable, lag in layout:
        part = permute_importance(model, samples, variable, lag, seeds, baseline, threads)
        merged.entries.update(part.entries)
    return merged


def importance_heatmaps(table: ImportanceTable, lead_count: int):
    """Two grids: rows are "variable (lag)" labels, columns lead times or months."""
    rows = sorted({(var, lag) for (var, lag, _, _) in table.entries})
    labels = [f"{var} ({lag})" for var, lag in rows]
    grid_lead = np.full((len(rows), lead_count), np.nan)
    grid_month = np.full((len(rows), 12), np.nan)
    for i, (var, lag) in enumerate(rows):
        for (v, lg, axis, value), (delta, _s, _b) in table.entries.items():
            if (v, lg) != (var, lag):
                continue
            if axis == "lead":
                grid_lead[i, value - 1] = delta
            elif axis == "target_month":
                grid_month[i, value - 1] = delta
    return grid_lead, grid_month, labels


@dataclass
class DetrendExperiment:
    variable: str
    baseline_importance: ImportanceTable
    detrended_importance: ImportanceTable
    metric_rows: list[tuple[str, str, float]]  # (experiment id, metric, value)


def detrended_retrain_experiment(
    variable: str,
    raw_series: dict,
    specs: list,
    model_config,
    train_config,
    splits,
    seeds: list[int],
    lead_count: int,
    pairs: list[tuple[str, int]] | None = None,
    threads: int | None = None,
) -> DetrendExperiment:
    """Retrain with one variable detrended; compare importance and test error.

    `pairs` limits the importance sweep (default: every lag of the detrended
    variable, which is what the before/after comparison needs).
    """
    if pairs is None:
        lags = next((s.lag_count for s in specs if s.id == variable), None)
        if lags is None:
            raise DataError(f"detrend experiment: {variable!r} not among the specs")
        pairs = [(variable, lag) for lag in range(1, lags + 1)]

    def run(series_map):
        fit = years_to_months(splits.train_years)
        prepared, _stats = preprocess(series_map, specs, fit)
        train = build_forecast_samples(prepared, specs, splits.train_years, lead_count)
        valid = build_forecast_samples(prepared, specs, splits.valid_years, lead_count)
        test = build_forecast_samples(prepared, specs, splits.test_years, lead_count)
        if not test:
            raise DataError("detrend experiment: empty test split")
        model = build_model(model_config, seed=train_config.seed)
        model, _history = train_loop(model, TrainValSplit(train, valid), train_config)
        table = run_importance(model, test, seeds, pairs=pairs, threads=threads)
        test_mae = float(_per_sample_maes(model, test).mean())
        return table, test_mae

    base_table, base_mae = run(raw_series)
    detrended = dict(raw_series)
    if variable not in detrended:
        raise DataError(f"detrend experiment: unknown variable {variable!r}")
    detrended[variable] = detrend_linear(raw_series[variable])
    new_table, new_mae = run(detrended)
    return DetrendExperiment(
        variable=variable,
        baseline_importance=base_table,
        detrended_importance=new_table,
        metric_rows=[("raw", "mae", base_mae), ("detrended", "mae", new_mae)],
    )
