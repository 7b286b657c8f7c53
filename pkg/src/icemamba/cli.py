"""Command-line entry point: synth, train, forecast, baseline, evaluate,
benchmark, explain.

Configuration lives in an INI-style file ([section] headers, key = value);
command-line flags override file keys. Unknown sections or keys are errors.
Every command writes a manifest with the config hash, seeds, version, and
input/output digests so reruns can be verified byte for byte.
"""

from __future__ import annotations

import argparse
import configparser
import functools
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import months as cal
from .baselines import anomaly_persistence, damped_persistence, trend_climatology
from .data.gridio import GridSeries, read_imgr, write_imgr
from .data.pipeline import (
    VariableSpec,
    channel_count,
    climatology_and_anomaly,
    make_splits,
    preprocess,
    years_to_months,
)
from .data.synthetic import generate_synthetic
from .errors import DataError, IceMambaError, NumericError, ShapeError, UsageError
from .explain import (
    detrended_retrain_experiment,
    importance_seeds,
    run_importance,
    worker_count,
)
from .metrics import (
    MetricTable,
    acc,
    iiee,
    masked_error,
    variability_mask,
    write_heatmap_csv,
    write_seasonal_csv,
)
from .model import (
    ModelConfig,
    build_model,
    forecast_autoregressive,
    forecast_direct,
    load_model,
    save_model,
)
from .training import (
    TrainConfig,
    TrainValSplit,
    build_forecast_samples,
    train_loop,
    write_history_csv,
)

_SCHEMA = {
    "data": {"dir", "grid_height", "grid_width", "years", "start_year", "seed"},
    "variables": None,  # free-form variable ids
    "model": {
        "embed_channels",
        "depths",
        "state_size",
        "patch_size",
        "lead_count",
        "precision",
    },
    "train": {"lr", "max_epochs", "patience", "seed"},
    "split": {"mode", "target_year", "data_start", "data_end"},
    "metrics": {"edge_threshold", "variability_threshold", "acc_mode"},
    "explain": {"seed_count", "master_seed"},
    "output": {"dir"},
}


class RunConfig:
    """Validated configuration tree for one run."""

    def __init__(self, parser: configparser.ConfigParser, path: Path):
        self.path = path
        for section in parser.sections():
            if section not in _SCHEMA:
                raise UsageError(f"unknown config section [{section}]")
            allowed = _SCHEMA[section]
            if allowed is not None:
                for key in parser[section]:
                    if key not in allowed:
                        raise UsageError(f"unknown config key {key!r} in [{section}]")
        self._p = parser

        self.data_dir = Path(self._get("data", "dir", "data"))
        self.grid_height = self._getint("data", "grid_height", 64)
        self.grid_width = self._getint("data", "grid_width", 64)
        self.years = self._getint("data", "years", 30)
        self.start_year = self._getint("data", "start_year", 2000)
        self.data_seed = self._getint("data", "seed", 0)

        self.specs = self._parse_variables()

        self.model_kwargs = dict(
            embed_channels=self._getint("model", "embed_channels", 16),
            depths=tuple(
                int(d) for d in self._get("model", "depths", "1,1").split(",") if d.strip()
            ),
            state_size=self._getint("model", "state_size", 16),
            patch_size=self._getint("model", "patch_size", 4),
            lead_count=self._getint("model", "lead_count", 4),
            precision=self._get("model", "precision", "f32"),
        )

        self.train_cfg = TrainConfig(
            initial_lr=self._getfloat("train", "lr", 1e-3),
            max_epochs=self._getint("train", "max_epochs", 200),
            patience=self._getint("train", "patience", 10),
            seed=self._getint("train", "seed", 0),
        )

        self.split_mode = self._get("split", "mode", "rolling")
        self.target_year = self._getint("split", "target_year", 0) or None
        self.data_start = self._getint("split", "data_start", self.start_year)
        self.data_end = self._getint("split", "data_end", self.start_year + self.years - 1)

        self.edge_threshold = self._getfloat("metrics", "edge_threshold", 0.15)
        self.variability_threshold = self._getfloat("metrics", "variability_threshold", 0.10)
        self.acc_mode = self._get("metrics", "acc_mode", "spatial")
        if self.acc_mode not in ("spatial",):
            raise UsageError(f"unsupported acc_mode {self.acc_mode!r}")

        self.seed_count = self._getint("explain", "seed_count", 10)
        self.master_seed = self._getint("explain", "master_seed", 0)

        self.out_dir = Path(self._get("output", "dir", "out"))

    def _get(self, section, key, default):
        if self._p.has_option(section, key):
            return self._p.get(section, key)
        return default

    def _getint(self, section, key, default):
        try:
            return int(self._get(section, key, default))
        except ValueError as exc:
            raise UsageError(f"[{section}] {key} must be an integer") from exc

    def _getfloat(self, section, key, default):
        try:
            return float(self._get(section, key, default))
        except ValueError as exc:
            raise UsageError(f"[{section}] {key} must be a number") from exc

    def _parse_variables(self) -> list[VariableSpec]:
        if not self._p.has_section("variables"):
            raise UsageError("config needs a [variables] section")
        specs = []
        for vid, value in self._p["variables"].items():
            lags, anomaly, norm = None, False, False
            for token in value.split(","):
                token = token.strip()
                if token.startswith("lags="):
                    lags = int(token.split("=", 1)[1])
                elif token == "anomaly":
                    anomaly = True
                elif token == "normalize":
                    norm = True
                elif token:
                    raise UsageError(f"unknown variable option {token!r} for {vid}")
            if lags is None:
                raise UsageError(f"variable {vid} needs lags=<n>")
            try:
                specs.append(VariableSpec(vid, lags, anomaly=anomaly, normalize=norm))
            except DataError as exc:
                raise UsageError(str(exc)) from exc
        if not any(s.id == "siconc" for s in specs):
            raise UsageError("[variables] must include siconc")
        return specs

    def splits(self, target_year: int | None = None):
        return make_splits(
            self.split_mode,
            target_year or self.target_year,
            data_start=self.data_start,
            data_end=self.data_end,
        )

    def config_hash(self) -> str:
        return hashlib.sha256(self.path.read_bytes()).hexdigest()


def load_config(path: str) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(p.read_text(encoding="utf-8"))
    except configparser.Error as exc:
        raise UsageError(f"cannot parse config: {exc}") from exc
    return RunConfig(parser, p)


# -- manifest -----------------------------------------------------------------


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@functools.lru_cache(maxsize=1)
def version_string() -> str:
    """Package version, suffixed with `git describe` when run from a checkout."""
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if described.returncode == 0 and described.stdout.strip():
            return f"{__version__}+g{described.stdout.strip()}"
    except (OSError, subprocess.TimeoutExpired):
        pass
    return __version__


def write_manifest(cfg: RunConfig, command: str, seeds: dict, inputs: list[Path], outputs: list[Path], extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "version": version_string(),
        "config_sha256": cfg.config_hash(),
        "seeds": seeds,
        "inputs": {str(p): _digest(p) for p in sorted(inputs)},
        "outputs": {str(p): _digest(p) for p in sorted(outputs)},
    }
    if extra:
        manifest.update(extra)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- shared data plumbing --------------------------------------------------------


def _series_paths(cfg: RunConfig) -> dict[str, Path]:
    return {spec.id: cfg.data_dir / f"{spec.id}.imgr" for spec in cfg.specs}


def load_series(cfg: RunConfig) -> dict[str, GridSeries]:
    series = {}
    for vid, path in _series_paths(cfg).items():
        if not path.exists():
            raise DataError(f"missing series file {path}; run `icemamba synth` or convert data")
        series[vid] = read_imgr(path)
    return series


def _prepared(cfg: RunConfig, splits):
    raw = load_series(cfg)
    fit = years_to_months(splits.train_years)
    return preprocess(raw, cfg.specs, fit)


def _model_config(cfg: RunConfig, lead_count: int | None = None) -> ModelConfig:
    kwargs = dict(cfg.model_kwargs)
    if lead_count:
        kwargs["lead_count"] = lead_count
    return ModelConfig(input_channels=channel_count(cfg.specs), **kwargs)


def _forecast_series(fc, land_mask) -> GridSeries:
    months = [fc.target_month(lead) for lead in fc.lead_times]
    return GridSeries("siconc", "fraction", months, fc.maps.astype(np.float32), land_mask)


def _write_forecasts(out_dir: Path, name: str, sets, land_mask) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    index_rows = []
    written = []
    for fc in sets:
        path = out_dir / f"{name}_{cal.to_iso(fc.init_month)}.imgr"
        write_imgr(_forecast_series(fc, land_mask), path)
        written.append(path)
        for lead in fc.lead_times:
            index_rows.append((cal.to_iso(fc.init_month), lead, path.name))
    index = out_dir / f"{name}_index.csv"
    with open(index, "w", encoding="utf-8") as fh:
        fh.write("init_month,lead,path\n")
        for row in index_rows:
            fh.write(",".join(str(x) for x in row) + "\n")
    written.append(index)
    return written


def _read_forecasts(out_dir: Path, name: str) -> list[tuple[int, Path]]:
    index = out_dir / f"{name}_index.csv"
    if not index.exists():
        raise DataError(f"no forecast index at {index}; run the producing command first")
    inits = {}
    for line in index.read_text(encoding="utf-8").splitlines()[1:]:
        init_iso, _lead, fname = line.split(",")
        inits[cal.from_iso(init_iso)] = out_dir / fname
    return sorted(inits.items())


# -- commands ----------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, args) -> int:
    seed = args.seed if args.seed is not None else cfg.data_seed
    data = generate_synthetic(cfg.grid_height, cfg.grid_width, cfg.years, seed, cfg.start_year)
    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for spec in cfg.specs:
        if spec.id not in data:
            raise DataError(f"synthetic generator has no variable {spec.id!r}")
        path = cfg.data_dir / f"{spec.id}.imgr"
        write_imgr(data[spec.id], path)
        outputs.append(path)
    write_manifest(cfg, "synth", {"data": seed}, [], outputs)
    print(f"wrote {len(outputs)} series to {cfg.data_dir}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    splits = cfg.splits(args.target_year)
    prepared, stats = _prepared(cfg, splits)
    lead_count = args.leads or cfg.model_kwargs["lead_count"]
    model_cfg = _model_config(cfg, lead_count)
    train = build_forecast_samples(prepared, cfg.specs, splits.train_years, lead_count)
    valid = build_forecast_samples(prepared, cfg.specs, splits.valid_years, lead_count)
    train_cfg = cfg.train_cfg
    if args.seed is not None:
        train_cfg = TrainConfig(
            initial_lr=train_cfg.initial_lr,
            max_epochs=train_cfg.max_epochs,
            patience=train_cfg.patience,
            seed=args.seed,
        )
    model = build_model(model_cfg, seed=train_cfg.seed)
    model, history = train_loop(model, TrainValSplit(train, valid), train_cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = cfg.out_dir / "model.imck"
    save_model(model, ckpt, stats_id=stats.stats_id())
    hist = cfg.out_dir / "history.csv"
    write_history_csv(hist, history)
    write_manifest(
        cfg,
        "train",
        {"train": train_cfg.seed},
        list(_series_paths(cfg).values()),
        [ckpt, Path(str(ckpt) + ".cfg"), hist],
        extra={
            "splits": {
                "train": [splits.train_years.start, splits.train_years.stop - 1],
                "valid": [splits.valid_years.start, splits.valid_years.stop - 1],
            }
        },
    )
    print(f"trained {len(history)} epochs; best valid {min(h.valid_loss for h in history):.6f}")
    return 0


def _test_samples(cfg: RunConfig, splits, lead_count):
    prepared, _ = _prepared(cfg, splits)
    samples = build_forecast_samples(prepared, cfg.specs, splits.test_years, lead_count)
    if not samples:
        raise DataError("no forecastable initialization months in the test range")
    return prepared, samples


def cmd_forecast(cfg: RunConfig, args) -> int:
    splits = cfg.splits(args.target_year)
    model = load_model(cfg.out_dir / "model.imck")
    lead_count = args.leads or model.config.lead_count
    prepared, samples = _test_samples(cfg, splits, lead_count)
    sets = []
    for sample in samples:
        if args.mode == "autoregressive":
            sets.append(forecast_autoregressive(model, sample.inputs, horizon=lead_count))
        else:
            sets.append(forecast_direct(model, sample.inputs))
    land = prepared["siconc"].land_mask
    outputs = _write_forecasts(cfg.out_dir / "forecasts", "model", sets, land)
    write_manifest(cfg, "forecast", {"train": cfg.train_cfg.seed}, [cfg.out_dir / "model.imck"], outputs)
    print(f"wrote {len(sets)} forecast sets ({args.mode})")
    return 0


def cmd_baseline(cfg: RunConfig, args) -> int:
    splits = cfg.splits(args.target_year)
    lead_count = args.leads or cfg.model_kwargs["lead_count"]
    prepared, samples = _test_samples(cfg, splits, lead_count)
    sic = prepared["siconc"]
    outputs = []
    made = {}
    for name, fn in (
        ("anomaly_persistence", anomaly_persistence),
        ("damped_persistence", damped_persistence),
        ("trend_climatology", trend_climatology),
    ):
        sets = [fn(sic, s.inputs.init_month, lead_count) for s in samples]
        outputs += _write_forecasts(cfg.out_dir / "baselines", name, sets, sic.land_mask)
        made[name] = len(sets)
    write_manifest(cfg, "baseline", {}, list(_series_paths(cfg).values()), outputs)
    print("; ".join(f"{k}: {v} sets" for k, v in made.items()))
    return 0


def _score_forecasts(cfg: RunConfig, splits, which: str) -> MetricTable:
    prepared, _ = _prepared(cfg, splits)
    sic = prepared["siconc"]
    ocean = ~sic.land_mask
    clim, _ = climatology_and_anomaly(sic, years_to_months(splits.train_years))
    sub_dir = cfg.out_dir / ("forecasts" if which == "model" else "baselines")
    table = MetricTable(mask_id="non_land")
    for init_month, path in _read_forecasts(sub_dir, which):
        fc = read_imgr(path)
        for lead, target in enumerate(fc.months, start=1):
            if not sic.has_month(target):
                continue
            pred = fc.fields[lead - 1]
            obs = sic.field(target)
            table.add("mae", init_month, lead, masked_error(pred, obs, ocean, "mae"))
            table.add("rmse", init_month, lead, masked_error(pred, obs, ocean, "rmse"))
            month_clim = clim[cal.month_of(target)]
            table.add("acc", init_month, lead, acc(pred - month_clim, obs - month_clim, ocean))
            total, oe, ue = iiee(pred, obs, ocean, threshold=cfg.edge_threshold)
            table.add("iiee", init_month, lead, total)
            table.add("oe", init_month, lead, oe)
            table.add("ue", init_month, lead, ue)
    if not table.entries:
        raise DataError("evaluation found no overlapping forecast/observation months")
    return table


def cmd_evaluate(cfg: RunConfig, args) -> int:
    splits = cfg.splits(args.target_year)
    which = "model" if args.mode != "baseline" else args.baseline_name
    table = _score_forecasts(cfg, splits, which)
    lead_count = args.leads or cfg.model_kwargs["lead_count"]
    out_metrics = cfg.out_dir / "metrics.csv"
    out_heat = cfg.out_dir / "heatmap.csv"
    out_seasonal = cfg.out_dir / "seasonal.csv"
    table.write_csv(out_metrics)
    write_heatmap_csv(out_heat, table, ["mae", "rmse", "acc"], lead_count)
    write_seasonal_csv(out_seasonal, table, ["iiee", "oe", "ue"])
    write_manifest(cfg, "evaluate", {}, [], [out_metrics, out_heat, out_seasonal])
    print(
        f"mean mae {table.mean('mae'):.4f}%  rmse {table.mean('rmse'):.4f}%  "
        f"acc {table.mean('acc'):.4f}  iiee {table.mean('iiee'):.1f} km2"
    )
    return 0


def cmd_benchmark(cfg: RunConfig, args) -> int:
    """September-target skill under rolling recalibration.

    For the target year: retrain on the rolling window, forecast September
    from initializations June through September, and score RMSE and ACC over
    the high-variability mask plus IIEE over non-land cells.
    """
    if args.target_year is None:
        raise UsageError("benchmark needs --target-year")
    year = args.target_year
    splits = cfg.splits(year)
    prepared, _stats = _prepared(cfg, splits)
    lead_count = max(args.leads or cfg.model_kwargs["lead_count"], 4)
    model_cfg = _model_config(cfg, lead_count)
    train = build_forecast_samples(prepared, cfg.specs, splits.train_years, lead_count)
    valid = build_forecast_samples(prepared, cfg.specs, splits.valid_years, lead_count)
    model = build_model(model_cfg, seed=cfg.train_cfg.seed)
    model, _ = train_loop(model, TrainValSplit(train, valid), cfg.train_cfg)

    sic = prepared["siconc"]
    ocean = ~sic.land_mask
    history = sic.subset([m for m in sic.months if m < cal.month_id(year, 1)])
    var_mask = variability_mask(history, 9, cfg.variability_threshold)
    clim, _ = climatology_and_anomaly(sic, years_to_months(splits.train_years))
    september = cal.month_id(year, 9)
    rows = []
    for init_cal in (6, 7, 8, 9):
        init = cal.month_id(year, init_cal)
        lead = september - init + 1
        if lead > lead_count or not sic.has_month(september):
            continue
        sample = build_forecast_samples(prepared, cfg.specs, range(year, year + 1), lead_count)
        match = [s for s in sample if s.inputs.init_month == init]
        if not match:
            continue
        fc = forecast_direct(model, match[0].inputs)
        pred = fc.map_for_lead(lead)
        obs = sic.field(september)
        rows.append((year, cal.to_iso(init), lead, "rmse", masked_error(pred, obs, var_mask, "rmse"), "percent"))
        rows.append(
            (year, cal.to_iso(init), lead, "acc", acc(pred - clim[9], obs - clim[9], var_mask), "dimensionless")
        )
        total, _oe, _ue = iiee(pred, obs, ocean, threshold=cfg.edge_threshold)
        rows.append((year, cal.to_iso(init), lead, "iiee", total, "km2"))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.out_dir / "benchmark.csv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("target_year,init_month,lead,metric,value,units\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")
    write_manifest(
        cfg,
        "benchmark",
        {"train": cfg.train_cfg.seed},
        list(_series_paths(cfg).values()),
        [out],
        extra={
            "splits": {
                "train": [splits.train_years.start, splits.train_years.stop - 1],
                "valid": [splits.valid_years.start, splits.valid_years.stop - 1],
            }
        },
    )
    print(
        f"benchmark year {year}: train {splits.train_years.start}-{splits.train_years.stop - 1}, "
        f"valid {splits.valid_years.start}-{splits.valid_years.stop - 1}, {len(rows)} rows"
    )
    return 0


def cmd_explain(cfg: RunConfig, args) -> int:
    splits = cfg.splits(args.target_year)
    seeds = importance_seeds(cfg.master_seed, cfg.seed_count)
    threads = worker_count()
    lead_count = args.leads or cfg.model_kwargs["lead_count"]
    outputs = []
    if args.detrend:
        exp = detrended_retrain_experiment(
            args.detrend,
            load_series(cfg),
            cfg.specs,
            _model_config(cfg, lead_count),
            cfg.train_cfg,
            splits,
            seeds,
            lead_count,
            threads=threads,
        )
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        base_path = cfg.out_dir / "importance_raw.csv"
        new_path = cfg.out_dir / "importance_detrended.csv"
        exp.baseline_importance.write_csv(base_path)
        exp.detrended_importance.write_csv(new_path)
        rows_path = cfg.out_dir / "detrend_metrics.csv"
        with open(rows_path, "w", encoding="utf-8") as fh:
            fh.write("experiment,metric,value,units\n")
            for exp_id, metric, value in exp.metric_rows:
                fh.write(f"{exp_id},{metric},{value!r},percent\n")
        outputs += [base_path, new_path, rows_path]
    else:
        model = load_model(cfg.out_dir / "model.imck")
        _prepared_set, samples = _test_samples(cfg, splits, model.config.lead_count)
        table = run_importance(model, samples, seeds, threads=threads)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        path = cfg.out_dir / "importance.csv"
        table.write_csv(path)
        outputs.append(path)
    write_manifest(
        cfg,
        "explain",
        {"master": cfg.master_seed, "permutation": seeds},
        list(_series_paths(cfg).values()),
        outputs,
    )
    print(f"wrote {', '.join(str(p) for p in outputs)}")
    return 0


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icemamba",
        description="Seasonal sea-ice concentration forecasting pipeline",
    )
    parser.add_argument("command", choices=[
        "synth", "train", "forecast", "baseline", "evaluate", "benchmark", "explain",
    ])
    parser.add_argument("--config", required=True, help="INI configuration file")
    parser.add_argument("--seed", type=int, default=None, help="override the seed")
    parser.add_argument("--mode", choices=["direct", "autoregressive", "baseline"], default="direct")
    parser.add_argument("--target-year", type=int, default=None)
    parser.add_argument("--leads", type=int, default=None)
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--detrend", default=None, help="variable to detrend and retrain on")
    parser.add_argument("--baseline-name", default="anomaly_persistence")
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "explain": cmd_explain,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.out_dir = Path(args.out)
        return _COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"icemamba: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"icemamba: data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ShapeError) as exc:
        print(f"icemamba: numeric error: {exc}", file=sys.stderr)
        return 3
    except IceMambaError as exc:
        print(f"icemamba: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
