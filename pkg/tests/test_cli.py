import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from icemamba import months as cal
from icemamba.cli import load_config, main
from icemamba.data.gridio import GridSeries, read_imgr, write_imgr
from icemamba.errors import UsageError

BASE_CONFIG = """
[data]
dir = {data_dir}
grid_height = 16
grid_width = 16
years = 18
start_year = 2000
seed = 3

[variables]
siconc = lags=12
t2m = lags=3, normalize
v10m = lags=3, normalize
u10 = lags=3

[model]
embed_channels = 8
depths = 1,1
state_size = 4
patch_size = 4
lead_count = 2
precision = f32

[train]
lr = 0.001
max_epochs = 2
patience = 10
seed = 0

[split]
mode = rolling
target_year = 2016
data_start = 2000
data_end = 2017

[explain]
seed_count = 2
master_seed = 1

[output]
dir = {out_dir}
"""


def write_config(tmp_path: Path, name="run.ini", **extra) -> Path:
    body = BASE_CONFIG.format(data_dir=tmp_path / "data", out_dir=tmp_path / "out")
    for key, val in extra.items():
        body += f"\n[{key.split('.')[0]}]\n{key.split('.')[1]} = {val}\n"
    path = tmp_path / name
    path.write_text(body)
    return path


def digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One synth+train+forecast+baseline+evaluate run shared by the checks."""
    tmp_path = tmp_path_factory.mktemp("cli")
    config = write_config(tmp_path)
    for command in ("synth", "train", "forecast", "baseline", "evaluate"):
        assert main([command, "--config", str(config)]) == 0, command
    return tmp_path, config


class TestPipeline:
    def test_artifacts_exist(self, pipeline):
        tmp_path, _ = pipeline
        out = tmp_path / "out"
        for name in (
            "model.imck",
            "model.imck.cfg",
            "history.csv",
            "metrics.csv",
            "heatmap.csv",
            "seasonal.csv",
            "manifest_train.json",
        ):
            assert (out / name).exists(), name
        assert (out / "forecasts" / "model_index.csv").exists()
        assert (out / "baselines" / "trend_climatology_index.csv").exists()

    def test_forecast_files_pass_grid_io(self, pipeline):
        tmp_path, _ = pipeline
        index = (tmp_path / "out" / "forecasts" / "model_index.csv").read_text().splitlines()[1:]
        paths = {row.split(",")[2] for row in index}
        for name in paths:
            series = read_imgr(tmp_path / "out" / "forecasts" / name)
            assert series.fields.min() >= 0.0 and series.fields.max() <= 1.0
            assert (series.fields[:, series.land_mask] == 0.0).all()

    def test_manifest_digests_match_files(self, pipeline):
        tmp_path, _ = pipeline
        manifest = json.loads((tmp_path / "out" / "manifest_train.json").read_text())
        for path, want in manifest["outputs"].items():
            assert digest(Path(path)) == want

    def test_rerun_reproduces_artifacts(self, pipeline):
        tmp_path, config = pipeline
        out = tmp_path / "out"
        before = {p.name: digest(p) for p in out.glob("*.csv")}
        before["model.imck"] = digest(out / "model.imck")
        for command in ("synth", "train", "forecast", "evaluate"):
            assert main([command, "--config", str(config)]) == 0
        after = {p.name: digest(p) for p in out.glob("*.csv")}
        after["model.imck"] = digest(out / "model.imck")
        assert before == after


class TestEvaluateIdentical:
    def test_perfect_forecast_scores_zero(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["synth", "--config", str(config)]) == 0
        sic = read_imgr(tmp_path / "data" / "siconc.imgr")
        fcdir = tmp_path / "out" / "forecasts"
        fcdir.mkdir(parents=True)
        rows = ["init_month,lead,path"]
        for init_cal in (1, 2):
            init = cal.month_id(2016, init_cal)
            months = [init, init + 1]
            fields = np.stack([sic.field(m) for m in months])
            name = f"model_{cal.to_iso(init)}.imgr"
            write_imgr(
                GridSeries("siconc", "fraction", months, fields, sic.land_mask), fcdir / name
            )
            for lead in (1, 2):
                rows.append(f"{cal.to_iso(init)},{lead},{name}")
        (fcdir / "model_index.csv").write_text("\n".join(rows) + "\n")
        assert main(["evaluate", "--config", str(config)]) == 0
        body = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
        for line in body[1:]:
            metric, value = line.split(",")[0], float(line.split(",")[5])
            if metric in ("mae", "rmse", "iiee", "oe", "ue"):
                assert value == 0.0, line


class TestErrors:
    def test_unknown_key_exit_1(self, tmp_path, capsys):
        config = write_config(tmp_path)
        config.write_text(config.read_text().replace("lr = 0.001", "learning_rate = 0.001"))
        code = main(["train", "--config", str(config)])
        assert code == 1
        assert "learning_rate" in capsys.readouterr().err

    def test_unknown_section_rejected(self, tmp_path):
        config = write_config(tmp_path)
        config.write_text(config.read_text() + "\n[mystery]\nx = 1\n")
        with pytest.raises(UsageError, match="mystery"):
            load_config(str(config))

    def test_missing_config_exit_1(self):
        assert main(["train", "--config", "/nonexistent.ini"]) == 1

    def test_missing_data_exit_2(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["train", "--config", str(config)]) == 2
        assert "data error" in capsys.readouterr().err

    def test_bad_command_exit_1(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["fabricate", "--config", str(config)]) == 1


class TestBenchmark:
    def test_rolling_splits_recorded(self, tmp_path):
        data_dir = tmp_path / "data"
        out_dir = tmp_path / "out"
        body = BASE_CONFIG.format(data_dir=data_dir, out_dir=out_dir)
        body = body.replace("start_year = 2000", "start_year = 1979")
        body = body.replace("years = 18", "years = 23")
        body = body.replace("target_year = 2016", "target_year = 2001")
        body = body.replace("data_start = 2000", "data_start = 1979")
        body = body.replace("data_end = 2017", "data_end = 2001")
        body = body.replace("max_epochs = 2", "max_epochs = 1")
        body = body.replace("lead_count = 2", "lead_count = 4")
        config = tmp_path / "bench.ini"
        config.write_text(body)
        assert main(["synth", "--config", str(config)]) == 0
        assert main(["benchmark", "--config", str(config), "--target-year", "2001"]) == 0
        manifest = json.loads((out_dir / "manifest_benchmark.json").read_text())
        assert manifest["splits"]["train"] == [1979, 1996]
        assert manifest["splits"]["valid"] == [1997, 2000]
        rows = (out_dir / "benchmark.csv").read_text().splitlines()
        assert rows[0] == "target_year,init_month,lead,metric,value,units"
        assert len(rows) > 1

    def test_benchmark_needs_target_year(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["benchmark", "--config", str(config)]) == 1
