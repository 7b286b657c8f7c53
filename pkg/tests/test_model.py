import numpy as np
import pytest

from icemamba.data.pipeline import AssembledSample
from icemamba.errors import ShapeError
from icemamba.model import (
    ForecastSet,
    ModelConfig,
    build_model,
    forecast_autoregressive,
    forecast_direct,
    load_model,
    mini_config,
    save_model,
)


def sic_only_sample(rng, h=16, w=16, init_month=24_000):
    layout = [("siconc", lag) for lag in range(1, 13)]
    channels = rng.uniform(0, 1, size=(12, h, w)).astype(np.float32)
    land = np.zeros((h, w), dtype=bool)
    land[0, :] = True
    channels[:, land] = 0.0
    return AssembledSample(init_month, channels, land, layout)


class TestBuild:
    def test_seeded_build_is_bit_identical(self):
        cfg = mini_config(input_channels=4, lead_count=2)
        m1 = build_model(cfg, seed=7)
        m2 = build_model(cfg, seed=7)
        for (n1, t1), (n2, t2) in zip(m1.store, m2.store):
            assert n1 == n2 and t1.data.tobytes() == t2.data.tobytes()

    def test_param_count_locked_default_config(self):
        # 54 input channels: 12 SIC lags + 14 covariates at 3 lags
        cfg = ModelConfig(input_channels=54)
        model = build_model(cfg, seed=0)
        assert model.store.n_values() == 2_477_464

    def test_param_count_locked_mini_config(self):
        cfg = mini_config(input_channels=18, lead_count=4)
        model = build_model(cfg, seed=0)
        assert model.store.n_values() == 63_997

    def test_lead_count_changes_only_head(self):
        shapes = {}
        for k in (1, 6):
            model = build_model(mini_config(input_channels=12, lead_count=k), seed=0)
            shapes[k] = {name: t.shape for name, t in model.store}
        diff = {n for n in shapes[1] if shapes[1][n] != shapes[6][n]}
        assert diff == {"head.w", "head.b"}

    def test_invalid_configs_rejected(self):
        with pytest.raises(ShapeError):
            ModelConfig(input_channels=12, lead_count=0)
        with pytest.raises(ShapeError):
            ModelConfig(input_channels=12, depths=())


class TestForecastDirect:
    def test_zero_weight_model_forecasts_zero(self, rng):
        cfg = mini_config(input_channels=12, lead_count=3)
        model = build_model(cfg, seed=0)
        for _, t in model.store:
            t.data = np.zeros_like(t.data)
        fc = forecast_direct(model, sic_only_sample(rng))
        assert isinstance(fc, ForecastSet)
        np.testing.assert_array_equal(fc.maps, 0.0)

    def test_outputs_clamped_and_land_zero(self, rng):
        cfg = mini_config(input_channels=12, lead_count=2)
        model = build_model(cfg, seed=3)
        sample = sic_only_sample(rng)
        fc = forecast_direct(model, sample)
        assert fc.maps.shape == (2, 16, 16)
        assert fc.maps.min() >= 0.0 and fc.maps.max() <= 1.0
        assert (fc.maps[:, sample.land_mask] == 0.0).all()

    def test_deterministic(self, rng):
        cfg = mini_config(input_channels=12, lead_count=2)
        model = build_model(cfg, seed=3)
        sample = sic_only_sample(rng)
        a = forecast_direct(model, sample).maps.tobytes()
        b = forecast_direct(model, sample).maps.tobytes()
        assert a == b

    def test_channel_mismatch_rejected(self, rng):
        model = build_model(mini_config(input_channels=10, lead_count=1), seed=0)
        with pytest.raises(ShapeError, match="channels"):
            forecast_direct(model, sic_only_sample(rng))

    def test_padded_shapes_roundtrip(self, rng):
        # 50 x 44 is not a multiple of the 8x reduction; output must crop back
        cfg = ModelConfig(
            input_channels=5, embed_channels=4, depths=(1, 1), state_size=2,
            patch_size=4, lead_count=2,
        )
        model = build_model(cfg, seed=1)
        layout = [("siconc", lag) for lag in range(1, 6)]
        sample = AssembledSample(
            0, rng.uniform(0, 1, size=(5, 50, 44)).astype(np.float32),
            np.zeros((50, 44), dtype=bool), layout,
        )
        fc = forecast_direct(model, sample)
        assert fc.maps.shape == (2, 50, 44)

    def test_target_months(self):
        fc = ForecastSet(init_month=100, maps=np.zeros((3, 2, 2)))
        assert [fc.target_month(l) for l in fc.lead_times] == [100, 101, 102]


class TestForecastAutoregressive:
    def test_horizon_one_equals_direct(self, rng):
        model = build_model(mini_config(input_channels=12, lead_count=1), seed=5)
        sample = sic_only_sample(rng)
        ar = forecast_autoregressive(model, sample, horizon=1)
        direct = forecast_direct(model, sample)
        np.testing.assert_array_equal(ar.maps[0], direct.maps[0])

    def test_four_forward_passes(self, rng):
        model = build_model(mini_config(input_channels=12, lead_count=1), seed=5)
        sample = sic_only_sample(rng)
        before = model.forward_count
        forecast_autoregressive(model, sample, horizon=4)
        assert model.forward_count - before == 4

    def test_copy_model_fixed_point(self, rng):
        class CopyModel:
            """Predicts exactly the most recent SIC input channel."""

            def __init__(self):
                self.config = mini_config(input_channels=12, lead_count=1)
                self.forward_count = 0

            def forward(self, channels):
                self.forward_count += 1
                return channels[:1].copy()

        sample = sic_only_sample(rng)
        fc = forecast_autoregressive(CopyModel(), sample, horizon=5)
        for lead in fc.lead_times:
            np.testing.assert_array_equal(fc.map_for_lead(lead), sample.channels[0])

    def test_requires_lead_one(self, rng):
        model = build_model(mini_config(input_channels=12, lead_count=4), seed=0)
        with pytest.raises(ShapeError, match="lead_count-1"):
            forecast_autoregressive(model, sic_only_sample(rng), horizon=2)

    def test_rejects_reanalysis_channels(self, rng):
        model = build_model(mini_config(input_channels=13, lead_count=1), seed=0)
        layout = [("siconc", lag) for lag in range(1, 13)] + [("t2m", 1)]
        sample = AssembledSample(
            0, rng.uniform(0, 1, size=(13, 8, 8)).astype(np.float32),
            np.zeros((8, 8), dtype=bool), layout,
        )
        with pytest.raises(ShapeError, match="SIC-only"):
            forecast_autoregressive(model, sample, horizon=2)

    def test_no_lookahead(self, rng):
        # Two samples whose channels agree on all input lags must forecast
        # identically regardless of what happens at or after the init month.
        model = build_model(mini_config(input_channels=12, lead_count=1), seed=2)
        s1 = sic_only_sample(rng)
        s2 = AssembledSample(s1.init_month, s1.channels.copy(), s1.land_mask, s1.layout)
        a = forecast_autoregressive(model, s1, horizon=3)
        b = forecast_autoregressive(model, s2, horizon=3)
        np.testing.assert_array_equal(a.maps, b.maps)


class TestPersistence:
    def test_save_load_roundtrip(self, tmp_path, rng):
        cfg = mini_config(input_channels=12, lead_count=2)
        model = build_model(cfg, seed=9)
        path = tmp_path / "model.imck"
        save_model(model, path, stats_id="abc123")
        loaded = load_model(path)
        assert loaded.config == cfg
        sample = sic_only_sample(rng)
        np.testing.assert_array_equal(
            forecast_direct(model, sample).maps, forecast_direct(loaded, sample).maps
        )
        assert "stats_id=abc123" in (tmp_path / "model.imck.cfg").read_text()
