"""Channel attention, residual state-space blocks, and patch-resolution ops."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .ssm import VssbWeights, vssb_forward
from .tensor import Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float32):
    """Normal(0, std) resampled until every value lies within 2 std."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out.astype(dtype)


@dataclass
class EcaWeights:
    kernel: Tensor  # odd-length 1-D conv over the channel axis

    def __post_init__(self):
        (k,) = self.kernel.shape
        if k < 1 or k % 2 == 0:
            raise ShapeError(f"EcaWeights: kernel length must be odd and >= 1, got {k}")


def eca_kernel_size(channels: int) -> int:
    """Odd kernel length from the channel count: |log2(C)/2 + 1/2|, bumped to odd."""
    if channels < 1:
        raise ShapeError(f"eca_kernel_size: channels must be >= 1, got {channels}")
    t = int(abs(math.log2(channels) / 2.0 + 0.5))
    k = t if t % 2 == 1 else t + 1
    return max(k, 1)


def eca_forward(x: Tensor, w: EcaWeights) -> Tensor:
    """Scale each channel by sigmoid(conv1d(global average pool))."""
    c = x.shape[0]
    if w.kernel.shape[0] > 2 * c - 1:
        raise ShapeError(
            f"eca_forward: kernel length {w.kernel.shape[0]} exceeds 2C-1 = {2 * c - 1}"
        )
    pooled = T.global_average_pool(x)
    gates = T.sigmoid(T.conv1d_vector(pooled, w.kernel))
    return T.mul(x, T.reshape(gates, (c, 1, 1)))


def conv1x1(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Per-position linear map over channels: [C,H,W] with w [C, C_out]."""
    out = T.linear(T.permute(x, (1, 2, 0)), w, b)
    return T.permute(out, (2, 0, 1))


@dataclass
class RessbWeights:
    eca: EcaWeights
    vssb1: VssbWeights
    vssb2: VssbWeights
    res_w: Tensor  # 1x1 convolution on the residual branch
    res_b: Tensor


def ressb_forward(x: Tensor, w: RessbWeights) -> Tensor:
    """Two-branch residual block: VSSB(VSSB(ECA(x))) + SiLU(conv1x1(x))."""
    enhanced = vssb_forward(vssb_forward(eca_forward(x, w.eca), w.vssb1), w.vssb2)
    residual = T.silu(conv1x1(x, w.res_w, w.res_b))
    return T.add(enhanced, residual)


# -- patch resolution ------------------------------------------------------


def patch_embed(x: Tensor, patch: int, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Flatten non-overlapping patch x patch blocks and map them linearly.

    [C_in, H, W] -> [C_emb, H/patch, W/patch]; H and W must divide evenly
    (the error names the padding that would fix it).
    """
    c, h, wd = x.shape
    if h % patch or wd % patch:
        need_h = (patch - h % patch) % patch
        need_w = (patch - wd % patch) % patch
        raise ShapeError(
            f"patch_embed: {h}x{wd} not divisible by patch {patch}; "
            f"pad by ({need_h}, {need_w}) first"
        )
    if w.shape[0] != c * patch * patch:
        raise ShapeError(
            f"patch_embed: weight rows {w.shape[0]} != C_in*P^2 = {c * patch * patch}"
        )
    hp, wp = h // patch, wd // patch
    t = T.reshape(x, (c, hp, patch, wp, patch))
    t = T.permute(t, (1, 3, 0, 2, 4))  # [hp, wp, C, P, P]
    t = T.reshape(t, (hp, wp, c * patch * patch))
    t = T.linear(t, w, b)
    return T.permute(t, (2, 0, 1))


def patch_merge(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Concatenate 2x2 neighborhoods and halve resolution: [C,H,W] -> [2C,H/2,W/2]."""
    c, h, wd = x.shape
    if h % 2 or wd % 2:
        raise ShapeError(f"patch_merge: spatial extents must be even, got {h}x{wd}")
    if w.shape != (4 * c, 2 * c):
        raise ShapeError(f"patch_merge: weight must be ({4 * c}, {2 * c}), got {w.shape}")
    t = T.reshape(x, (c, h // 2, 2, wd // 2, 2))
    t = T.permute(t, (1, 3, 2, 4, 0))  # [h/2, w/2, 2, 2, C]
    t = T.reshape(t, (h // 2, wd // 2, 4 * c))
    t = T.linear(t, w, b)
    return T.permute(t, (2, 0, 1))


def patch_expand(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Split each position into a 2x2 block: [C,H,W] -> [C/2,2H,2W]."""
    c, h, wd = x.shape
    if c % 2:
        raise ShapeError(f"patch_expand: channels must be even, got {c}")
    if w.shape != (c, 2 * c):
        raise ShapeError(f"patch_expand: weight must be ({c}, {2 * c}), got {w.shape}")
    t = T.linear(T.permute(x, (1, 2, 0)), w, b)  # [H, W, 2C]
    t = T.reshape(t, (h, wd, 2, 2, c // 2))
    t = T.permute(t, (4, 0, 2, 1, 3))  # [C/2, H, 2, W, 2]
    return T.reshape(t, (c // 2, 2 * h, 2 * wd))


def final_patch_expand(x: Tensor, patch: int, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Restore the embed patch size without shrinking channels: [C,H,W] -> [C,PH,PW]."""
    c, h, wd = x.shape
    if w.shape != (c, c * patch * patch):
        raise ShapeError(
            f"final_patch_expand: weight must be ({c}, {c * patch * patch}), got {w.shape}"
        )
    t = T.linear(T.permute(x, (1, 2, 0)), w, b)  # [H, W, C*P*P]
    t = T.reshape(t, (h, wd, patch, patch, c))
    t = T.permute(t, (4, 0, 2, 1, 3))  # [C, H, P, W, P]
    return T.reshape(t, (c, h * patch, wd * patch))


def patch_rescale(x: Tensor, direction: str, w: Tensor, b: Tensor | None = None, patch: int | None = None) -> Tensor:
    if direction == "merge":
        return patch_merge(x, w, b)
    if direction == "expand":
        return patch_expand(x, w, b)
    if direction == "final_expand":
        if patch is None:
            raise ShapeError("patch_rescale: final_expand needs the embed patch size")
        return final_patch_expand(x, patch, w, b)
    raise ShapeError(f"patch_rescale: unknown direction {direction!r}")


def output_head(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Map channels to the lead count with a 1x1 convolution and tanh."""
    if w.shape[1] < 1:
        raise ShapeError("output_head: need at least one output map")
    return T.tanh(conv1x1(x, w, b))
