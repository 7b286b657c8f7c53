"""Encoder-decoder forecast model assembly and the two forecast modes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .blocks import (
    EcaWeights,
    RessbWeights,
    eca_kernel_size,
    final_patch_expand,
    output_head,
    patch_embed,
    patch_expand,
    patch_merge,
    ressb_forward,
    trunc_normal,
)
from .data.pipeline import AssembledSample
from .errors import DataError, NumericError, ShapeError
from .ssm import SsmParams, VssbWeights
from .tensor import ParamStore, Tensor, load_checkpoint, save_checkpoint

# softplus(delta_bias) starts every step size near this value
_DELTA_INIT = 0.05
_DELTA_BIAS = math.log(math.expm1(_DELTA_INIT))


@dataclass(frozen=True)
class ModelConfig:
    input_channels: int
    embed_channels: int = 48
    depths: tuple[int, ...] = (2, 2, 2)
    state_size: int = 16
    patch_size: int = 4
    lead_count: int = 6
    precision: str = "f32"

    def __post_init__(self):
        if self.lead_count < 1:
            raise ShapeError("lead_count must be >= 1")
        if not self.depths:
            raise ShapeError("depths must be nonempty")
        if self.input_channels < 1 or self.embed_channels < 1:
            raise ShapeError("channel counts must be >= 1")
        if self.state_size < 1 or self.patch_size < 1:
            raise ShapeError("state_size and patch_size must be >= 1")
        if self.precision not in ("f32", "f64"):
            raise ShapeError(f"precision must be f32 or f64, got {self.precision!r}")

    @property
    def reduction(self) -> int:
        """Input extents are padded to a multiple of this."""
        return self.patch_size * 2 ** (len(self.depths) - 1)

    def to_record(self) -> str:
        lines = [
            f"input_channels={self.input_channels}",
            f"embed_channels={self.embed_channels}",
            "depths=" + ",".join(str(d) for d in self.depths),
            f"state_size={self.state_size}",
            f"patch_size={self.patch_size}",
            f"lead_count={self.lead_count}",
            f"precision={self.precision}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text: str) -> "ModelConfig":
        kv = {}
        for line in text.strip().splitlines():
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, val = line.split("=", 1)
            kv[key.strip()] = val.strip()
        try:
            return cls(
                input_channels=int(kv["input_channels"]),
                embed_channels=int(kv["embed_channels"]),
                depths=tuple(int(d) for d in kv["depths"].split(",")),
                state_size=int(kv["state_size"]),
                patch_size=int(kv["patch_size"]),
                lead_count=int(kv["lead_count"]),
                precision=kv["precision"],
            )
        except KeyError as exc:
            raise DataError(f"model config record missing key {exc}") from exc


def mini_config(input_channels: int, lead_count: int, precision: str = "f32") -> ModelConfig:
    """Desk-scale preset: small embedding, two stages."""
    return ModelConfig(
        input_channels=input_channels,
        embed_channels=16,
        depths=(1, 1),
        state_size=16,
        patch_size=4,
        lead_count=lead_count,
        precision=precision,
    )


class _Builder:
    def __init__(self, store: ParamStore, rng: np.random.Generator):
        self.store = store
        self.rng = rng
        self.dtype = store.dtype

    def weight(self, name: str, shape) -> Tensor:
        return self.store.add(name, trunc_normal(self.rng, shape, std=0.02, dtype=self.dtype))

    def const(self, name: str, shape, value: float) -> Tensor:
        return self.store.add(name, np.full(shape, value, dtype=self.dtype))

    def ssm(self, prefix: str, c: int, n: int) -> SsmParams:
        a_log = np.log(np.tile(np.arange(1.0, n + 1.0), (c, 1)))
        return SsmParams(
            a_log=self.store.add(f"{prefix}.a_log", a_log),
            d_skip=self.const(f"{prefix}.d", (c,), 1.0),
            delta_w=self.weight(f"{prefix}.delta_w", (c, c)),
            delta_bias=self.const(f"{prefix}.delta_b", (c,), _DELTA_BIAS),
            b_w=self.weight(f"{prefix}.b_w", (c, n)),
            c_w=self.weight(f"{prefix}.c_w", (c, n)),
        )

    def vssb(self, prefix: str, c: int, n: int) -> VssbWeights:
        return VssbWeights(
            norm_gamma=self.const(f"{prefix}.norm.g", (c,), 1.0),
            norm_beta=self.const(f"{prefix}.norm.b", (c,), 0.0),
            in_w=self.weight(f"{prefix}.in.w", (c, c)),
            in_b=self.const(f"{prefix}.in.b", (c,), 0.0),
            conv_k=self.weight(f"{prefix}.conv.k", (c, 3, 3)),
            ssm=tuple(self.ssm(f"{prefix}.ssm{d}", c, n) for d in range(4)),
            out_norm_gamma=self.const(f"{prefix}.onorm.g", (c,), 1.0),
            out_norm_beta=self.const(f"{prefix}.onorm.b", (c,), 0.0),
            gate_w=self.weight(f"{prefix}.gate.w", (c, c)),
            gate_b=self.const(f"{prefix}.gate.b", (c,), 0.0),
            proj_w=self.weight(f"{prefix}.proj.w", (c, c)),
            proj_b=self.const(f"{prefix}.proj.b", (c,), 0.0),
        )

    def ressb(self, prefix: str, c: int, n: int) -> RessbWeights:
        return RessbWeights(
            eca=EcaWeights(self.weight(f"{prefix}.eca.k", (eca_kernel_size(c),))),
            vssb1=self.vssb(f"{prefix}.vssb1", c, n),
            vssb2=self.vssb(f"{prefix}.vssb2", c, n),
            res_w=self.weight(f"{prefix}.res.w", (c, c)),
            res_b=self.const(f"{prefix}.res.b", (c,), 0.0),
        )


class Model:
    """Assembled network: patch embed, staged encoder, mirrored decoder, tanh head."""

    def __init__(self, config: ModelConfig, store: ParamStore, parts: dict):
        self.config = config
        self.store = store
        self.parts = parts
        self.forward_count = 0

    def forward_tensor(self, channels: np.ndarray) -> Tensor:
        cfg = self.config
        if channels.shape[0] != cfg.input_channels:
            raise ShapeError(
                f"forward: sample has {channels.shape[0]} channels, "
                f"model expects {cfg.input_channels}"
            )
        self.forward_count += 1
        _, h0, w0 = channels.shape
        m = cfg.reduction
        pad_h = (m - h0 % m) % m
        pad_w = (m - w0 % m) % m
        x = Tensor(np.ascontiguousarray(channels, dtype=self.store.dtype))
        if pad_h or pad_w:
            x = T.pad_hw(x, pad_h, pad_w)

        p = self.parts
        x = patch_embed(x, cfg.patch_size, p["embed_w"], p["embed_b"])
        skips = []
        n_stages = len(cfg.depths)
        for s in range(n_stages):
            for block in p["enc"][s]:
                x = ressb_forward(x, block)
            if s < n_stages - 1:
                skips.append(x)
                x = patch_merge(x, p["merge"][s][0], p["merge"][s][1])
        for s in range(n_stages - 2, -1, -1):
            x = patch_expand(x, p["expand"][s][0], p["expand"][s][1])
            x = T.add(x, skips[s])
            for block in p["dec"][s]:
                x = ressb_forward(x, block)
        x = final_patch_expand(x, cfg.patch_size, p["final_w"], p["final_b"])
        y = output_head(x, p["head_w"], p["head_b"])
        if pad_h or pad_w:
            y = T.crop_hw(y, h0, w0)
        return y

    def forward(self, channels: np.ndarray) -> np.ndarray:
        with T.no_grad():
            return self.forward_tensor(channels).data


def build_model(config: ModelConfig, seed: int) -> Model:
    """Deterministically initialize every weight from the seed."""
    store = ParamStore(config.precision)
    b = _Builder(store, np.random.default_rng(seed))
    cfg = config
    widths = [cfg.embed_channels * 2**s for s in range(len(cfg.depths))]
    parts: dict = {}
    parts["embed_w"] = b.weight("embed.w", (cfg.input_channels * cfg.patch_size**2, widths[0]))
    parts["embed_b"] = b.const("embed.b", (widths[0],), 0.0)
    parts["enc"] = [
        [b.ressb(f"enc{s}.block{i}", widths[s], cfg.state_size) for i in range(cfg.depths[s])]
        for s in range(len(cfg.depths))
    ]
    parts["merge"] = [
        (
            b.weight(f"merge{s}.w", (4 * widths[s], widths[s + 1])),
            b.const(f"merge{s}.b", (widths[s + 1],), 0.0),
        )
        for s in range(len(cfg.depths) - 1)
    ]
    parts["expand"] = [
        (
            b.weight(f"dec{s}.expand.w", (widths[s + 1], 2 * widths[s + 1])),
            b.const(f"dec{s}.expand.b", (2 * widths[s + 1],), 0.0),
        )
        for s in range(len(cfg.depths) - 1)
    ]
    parts["dec"] = [
        [b.ressb(f"dec{s}.block{i}", widths[s], cfg.state_size) for i in range(cfg.depths[s])]
        for s in range(len(cfg.depths) - 1)
    ]
    parts["final_w"] = b.weight("final.w", (widths[0], widths[0] * cfg.patch_size**2))
    parts["final_b"] = b.const("final.b", (widths[0] * cfg.patch_size**2,), 0.0)
    parts["head_w"] = b.weight("head.w", (widths[0], cfg.lead_count))
    parts["head_b"] = b.const("head.b", (cfg.lead_count,), 0.0)
    return Model(config, store, parts)


# -- forecasting ----------------------------------------------------------------


@dataclass
class ForecastSet:
    """Per-initialization forecast maps, one per lead time, in [0, 1], land 0."""

    init_month: int
    maps: np.ndarray  # [k, H, W]

    @property
    def lead_times(self) -> range:
        return range(1, self.maps.shape[0] + 1)

    def target_month(self, lead: int) -> int:
        return self.init_month + lead - 1

    def map_for_lead(self, lead: int) -> np.ndarray:
        return self.maps[lead - 1]


def forecast_direct(model: Model, sample: AssembledSample) -> ForecastSet:
    """One forward pass; tanh output clamped to [0, 1] and land forced to 0."""
    out = model.forward(sample.channels)
    if not np.isfinite(out).all():
        bad = int(np.argmin(np.isfinite(out).ravel()))
        raise NumericError(f"forecast: non-finite activation at flat index {bad}")
    maps = np.clip(out, 0.0, 1.0)
    maps[:, sample.land_mask] = 0.0
    return ForecastSet(init_month=sample.init_month, maps=maps)


def forecast_autoregressive(model: Model, sample: AssembledSample, horizon: int) -> ForecastSet:
    """Feed each 1-month prediction back into the 12-month SIC window."""
    if model.config.lead_count != 1:
        raise ShapeError("autoregressive forecasting needs a lead_count-1 model")
    if any(var != "siconc" for var, _ in sample.layout):
        raise ShapeError("autoregressive forecasting needs a SIC-only input layout")
    if horizon < 1:
        raise ShapeError(f"horizon must be >= 1, got {horizon}")
    window = sample.channels.copy()  # lag 1 first
    maps = []
    for _ in range(horizon):
        step_sample = AssembledSample(sample.init_month, window, sample.land_mask, sample.layout)
        step = forecast_direct(model, step_sample)
        pred = step.maps[0]
        maps.append(pred)
        window = np.concatenate([pred[None], window[:-1]], axis=0)
    return ForecastSet(init_month=sample.init_month, maps=np.stack(maps))


# -- persistence ------------------------------------------------------------------


def save_model(model: Model, path, stats_id: str = "none") -> None:
    save_checkpoint(model.store, path)
    sidecar = str(path) + ".cfg"
    with open(sidecar, "w", encoding="utf-8") as fh:
        fh.write(model.config.to_record())
        fh.write(f"stats_id={stats_id}\n")


def load_model(path) -> Model:
    sidecar = str(path) + ".cfg"
    try:
        with open(sidecar, "r", encoding="utf-8") as fh:
            config = ModelConfig.from_record(fh.read())
    except FileNotFoundError:
        raise DataError(f"missing model config sidecar {sidecar}") from None
    loaded = load_checkpoint(path)
    model = build_model(config, seed=0)
    if list(loaded.params) != list(model.store.params):
        raise DataError("checkpoint parameters do not match the configured architecture")
    for name, tensor in model.store.params.items():
        src = loaded.params[name]
        if src.shape != tensor.shape:
            raise DataError(f"checkpoint shape mismatch at {name}")
        tensor.data = src.data.astype(model.store.dtype)
    model.store.step = loaded.step
    return model
