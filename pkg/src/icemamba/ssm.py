"""Selective state-space machinery.

Covers zero-order-hold discretization, the input-dependent recurrence, the
time-invariant convolutional form, the four-direction 2-D cross scan with
its merge, and the vision state-space block (VSSB) that composes them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _scan
from . import tensor as T
from .errors import NumericError, ShapeError
from .tensor import Tensor

SCAN_ORDERS = ("row", "col", "row_rev", "col_rev")


@dataclass
class SsmParams:
    """Per-direction selective-scan parameters.

    The state matrix is stored as ``a_log`` with A = -exp(a_log), which keeps
    every diagonal entry strictly negative no matter what training does to
    the underlying parameter.
    """

    a_log: Tensor  # [C, N]
    d_skip: Tensor  # [C]
    delta_w: Tensor  # [C, C]
    delta_bias: Tensor  # [C]
    b_w: Tensor  # [C, N]
    c_w: Tensor  # [C, N]

    def __post_init__(self):
        c, n = self.a_log.shape
        if n < 1:
            raise ShapeError("SsmParams: state size must be >= 1")
        if self.d_skip.shape != (c,):
            raise ShapeError(f"SsmParams: d_skip {self.d_skip.shape} != ({c},)")
        if self.delta_w.shape != (c, c) or self.delta_bias.shape != (c,):
            raise ShapeError("SsmParams: delta projection shapes inconsistent")
        if self.b_w.shape != (c, n) or self.c_w.shape != (c, n):
            raise ShapeError("SsmParams: B/C projection shapes inconsistent")

    @property
    def channels(self) -> int:
        return self.a_log.shape[0]

    @property
    def state_size(self) -> int:
        return self.a_log.shape[1]

    def a_diag(self) -> Tensor:
        """A as a tensor op so gradients reach a_log."""
        return -T.exp(self.a_log)


@dataclass
class ScanSequence:
    """A flattened traversal of a feature map: x is [L, channels]."""

    x: Tensor
    order_tag: str = "row"

    def __post_init__(self):
        if self.x.data.ndim != 2:
            raise ShapeError(f"ScanSequence: x must be [L, C], got {self.x.shape}")

    @property
    def length(self) -> int:
        return self.x.shape[0]

    @property
    def channels(self) -> int:
        return self.x.shape[1]


def zoh_discretize(a_diag, b, delta):
    """Zero-order-hold step: A_bar = exp(delta*A), B_bar = delta*B.

    B_bar uses the first-order simplification delta*B rather than the exact
    (exp(delta*A)-I) A^-1 B. Inputs broadcast; delta must be non-negative.
    """
    a_diag = np.asarray(a_diag, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if (delta < 0).any():
        raise NumericError("zoh_discretize: delta must be non-negative")
    return np.exp(delta * a_diag), delta * b


def scan_recurrence(
    x: Tensor, delta: Tensor, a_diag: Tensor, b_seq: Tensor, c_seq: Tensor, d_skip: Tensor
) -> Tensor:
    """Differentiable recurrence core: h_k = e^{dA} h_{k-1} + (d B) x_k, y_k = C h_k + D x_k.

    x, delta are [L, C]; b_seq, c_seq are [L, N]; a_diag is [C, N]; d_skip is [C].
    Dispatches to the compiled kernel when available.
    """
    L, C = x.shape
    N = a_diag.shape[1]
    if delta.shape != (L, C):
        raise ShapeError(f"scan_recurrence: delta {delta.shape} != {(L, C)}")
    if a_diag.shape != (C, N):
        raise ShapeError(f"scan_recurrence: a_diag {a_diag.shape} != {(C, N)}")
    if b_seq.shape != (L, N) or c_seq.shape != (L, N):
        raise ShapeError(
            f"scan_recurrence: b/c sequences {b_seq.shape}, {c_seq.shape} != {(L, N)}"
        )
    if d_skip.shape != (C,):
        raise ShapeError(f"scan_recurrence: d_skip {d_skip.shape} != {(C,)}")

    args = [np.ascontiguousarray(t.data) for t in (x, delta, a_diag, b_seq, c_seq, d_skip)]
    want = T.grad_enabled() and any(
        t.requires_grad for t in (x, delta, a_diag, b_seq, c_seq, d_skip)
    )
    y, cache = _scan.scan_forward(*args, want_states=want)

    def vjp(g):
        dx, ddelta, da, db, dcm, dd = _scan.scan_backward(
            *args, cache, np.ascontiguousarray(g)
        )
        T._accum(x, dx)
        T._accum(delta, ddelta)
        T._accum(a_diag, da)
        T._accum(b_seq, db)
        T._accum(c_seq, dcm)
        T._accum(d_skip, dd)

    return T._result(y, (x, delta, a_diag, b_seq, c_seq, d_skip), vjp)


def selective_scan(seq: ScanSequence, params: SsmParams) -> ScanSequence:
    """Input-dependent scan: delta, B, C are recomputed from each step's input."""
    if seq.channels != params.channels:
        raise ShapeError(
            f"selective_scan: sequence channels {seq.channels} != params {params.channels}"
        )
    delta = T.softplus(T.linear(seq.x, params.delta_w, params.delta_bias))
    b_seq = T.matmul(seq.x, params.b_w)
    c_seq = T.matmul(seq.x, params.c_w)
    y = scan_recurrence(seq.x, delta, params.a_diag(), b_seq, c_seq, params.d_skip)
    return ScanSequence(y, seq.order_tag)


def lti_conv_scan(seq: ScanSequence, a_bar, b_bar, c_out, d_skip) -> ScanSequence:
    """Time-invariant scan as a causal convolution with kernel [CB, CAB, CA^2B, ...].

    Parameters must be constant over the sequence; anything carrying a
    per-step axis is rejected as a contract violation.
    """
    x = seq.x.data
    L, C = x.shape
    a_bar = np.asarray(a_bar, dtype=np.float64)
    b_bar = np.asarray(b_bar, dtype=np.float64)
    c_out = np.asarray(c_out, dtype=np.float64)
    d = np.asarray(d_skip, dtype=np.float64)
    if a_bar.ndim > 2 or b_bar.ndim > 2 or c_out.ndim != 1 or d.ndim > 1:
        raise ShapeError("lti_conv_scan: parameters must be fixed (no per-step axis)")
    if a_bar.ndim == 1:
        a_bar = np.broadcast_to(a_bar, (C, a_bar.shape[0]))
    if b_bar.ndim == 1:
        b_bar = np.broadcast_to(b_bar, (C, b_bar.shape[0]))
    if d.ndim == 0:
        d = np.full(C, float(d))
    n = a_bar.shape[1]
    if b_bar.shape != a_bar.shape or c_out.shape != (n,) or d.shape != (C,):
        raise ShapeError(
            f"lti_conv_scan: inconsistent parameter shapes {a_bar.shape}, "
            f"{b_bar.shape}, {c_out.shape}, {d.shape}"
        )
    # kern[c, l] = sum_n c_out[n] * a_bar[c,n]^l * b_bar[c,n]
    powers = a_bar[:, :, None] ** np.arange(L)[None, None, :]  # [C, N, L]
    kern = np.einsum("n,cnl->cl", c_out, powers * b_bar[:, :, None])
    y = np.empty((L, C), dtype=np.float64)
    for c in range(C):
        y[:, c] = np.convolve(x[:, c].astype(np.float64), kern[c])[:L] + d[c] * x[:, c]
    return ScanSequence(Tensor(y.astype(x.dtype)), seq.order_tag)


def cross_scan(feature: Tensor) -> list[ScanSequence]:
    """Unroll [C, H, W] into four traversal orders.

    Order 1 is row-major from the top-left, order 2 column-major from the
    top-left, orders 3 and 4 are their exact reversals (the bottom-right
    starts).
    """
    if feature.data.ndim != 3:
        raise ShapeError(f"cross_scan: need [C,H,W], got {feature.shape}")
    c, h, w = feature.shape
    row = T.permute(T.reshape(feature, (c, h * w)), (1, 0))
    col = T.permute(T.reshape(T.permute(feature, (0, 2, 1)), (c, h * w)), (1, 0))
    return [
        ScanSequence(row, "row"),
        ScanSequence(col, "col"),
        ScanSequence(T.flip(row, axis=0), "row_rev"),
        ScanSequence(T.flip(col, axis=0), "col_rev"),
    ]


def cross_merge(seqs: list[ScanSequence], h: int, w: int) -> Tensor:
    """Inverse-permute four scanned sequences onto the grid and sum them."""
    if len(seqs) != 4:
        raise ShapeError(f"cross_merge: need exactly 4 sequences, got {len(seqs)}")
    for s in seqs:
        if s.length != h * w:
            raise ShapeError(
                f"cross_merge: sequence length {s.length} != H*W = {h * w}"
            )
    c = seqs[0].channels

    def to_grid(seq: ScanSequence) -> Tensor:
        x = seq.x
        tag = seq.order_tag
        if tag.endswith("_rev"):
            x = T.flip(x, axis=0)
            tag = tag[: -len("_rev")]
        grid = T.reshape(T.permute(x, (1, 0)), (c, h, w) if tag == "row" else (c, w, h))
        if tag == "col":
            grid = T.permute(grid, (0, 2, 1))
        return grid

    out = to_grid(seqs[0])
    for s in seqs[1:]:
        out = T.add(out, to_grid(s))
    return out


@dataclass
class VssbWeights:
    """Vision state-space block weights: norms, projections, conv, 4 scan params."""

    norm_gamma: Tensor
    norm_beta: Tensor
    in_w: Tensor
    in_b: Tensor
    conv_k: Tensor  # [C, 3, 3] depthwise
    ssm: tuple[SsmParams, SsmParams, SsmParams, SsmParams]
    out_norm_gamma: Tensor
    out_norm_beta: Tensor
    gate_w: Tensor
    gate_b: Tensor
    proj_w: Tensor
    proj_b: Tensor


def vssb_forward(x: Tensor, w: VssbWeights) -> Tensor:
    """Residual VSSB: norm -> (linear/conv/silu/SS2D/norm) gated, projected, added back."""
    if x.data.ndim != 3:
        raise ShapeError(f"vssb_forward: need [C,H,W], got {x.shape}")
    c, h, wd = x.shape
    u = T.layer_norm(T.permute(x, (1, 2, 0)), w.norm_gamma, w.norm_beta)  # [H,W,C]

    main = T.linear(u, w.in_w, w.in_b)
    main = T.permute(main, (2, 0, 1))
    main = T.depthwise_conv2d(main, w.conv_k)
    main = T.silu(main)
    seqs = cross_scan(main)
    scanned = [selective_scan(seqs[i], w.ssm[i]) for i in range(4)]
    merged = cross_merge(scanned, h, wd)
    mp = T.layer_norm(T.permute(merged, (1, 2, 0)), w.out_norm_gamma, w.out_norm_beta)

    gate = T.silu(T.linear(u, w.gate_w, w.gate_b))
    out = T.linear(T.mul(mp, gate), w.proj_w, w.proj_b)
    return T.add(x, T.permute(out, (2, 0, 1)))
