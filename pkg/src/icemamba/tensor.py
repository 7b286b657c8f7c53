"""Dense multi-dimensional arrays with reverse-mode differentiation.

Values live in numpy arrays (float32 for training, float64 for numeric
verification); every differentiable operation records its inputs and a
vector-Jacobian closure so :func:`backward` can replay the tape in reverse
topological order. Gradient accumulation is additive across repeated use of
a tensor.
"""

from __future__ import annotations

import json
import struct
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DataError, NumericError, ShapeError

DTYPES = {"f32": np.float32, "f64": np.float64}

_tape_state = threading.local()


class no_grad:
    """Context manager that suspends tape recording (inference mode).

    The flag is per-thread so concurrent inference cannot disturb a training
    thread's tape.
    """

    def __enter__(self):
        self._prev = grad_enabled()
        _tape_state.enabled = False
        return self

    def __exit__(self, *exc):
        _tape_state.enabled = self._prev
        return False


def grad_enabled() -> bool:
    return getattr(_tape_state, "enabled", True)


class Tensor:
    """A dense array plus optional gradient and tape bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            raise ShapeError("Tensor(data) expects array-like, not Tensor")
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            arr = data
        else:
            arr = np.asarray(data, dtype=np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._vjp: Callable | None = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- operators -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise ShapeError("tensor/tensor division is not part of the op set")
        return mul(self, 1.0 / float(scalar))


def _result(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable | None) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    needs = grad_enabled() and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    out._parents = tuple(parents) if needs else ()
    out._vjp = vjp if needs else None
    return out


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        if x.data.dtype != like.data.dtype:
            raise ShapeError(
                f"mixed precision operands: {x.data.dtype} vs {like.data.dtype}"
            )
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic ---------------------------------------------------------


def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.data.dtype))
    b = _coerce(b, a)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}")

    def vjp(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _result(data, (a, b), vjp)


def sub(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.data.dtype))
    b = _coerce(b, a)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}")

    def vjp(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _result(data, (a, b), vjp)


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        a, b = b, a
    if isinstance(b, Tensor):
        b = _coerce(b, a)
        try:
            data = a.data * b.data
        except ValueError:
            raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}")

        def vjp(g):
            _accum(a, _unbroadcast(g * b.data, a.shape))
            _accum(b, _unbroadcast(g * a.data, b.shape))

        return _result(data, (a, b), vjp)

    s = a.data.dtype.type(b)
    data = a.data * s

    def vjp_scalar(g):
        _accum(a, g * s)

    return _result(data, (a,), vjp_scalar)


# -- activations --------------------------------------------------------

ACTIVATIONS = ("silu", "tanh", "sigmoid", "softplus")


def _check_finite(x: Tensor, op: str) -> None:
    if not np.isfinite(x.data).all():
        idx = int(np.argmin(np.isfinite(x.data).ravel()))
        raise NumericError(f"{op}: non-finite input at flat index {idx}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def elementwise_activation(x: Tensor, kind: str) -> Tensor:
    """Apply silu/tanh/sigmoid/softplus elementwise; rejects non-finite input."""
    if kind not in ACTIVATIONS:
        raise ShapeError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
    _check_finite(x, kind)
    xd = x.data
    if kind == "silu":
        s = _sigmoid(xd)
        data = xd * s
        local = s * (1.0 + xd * (1.0 - s))
    elif kind == "tanh":
        data = np.tanh(xd)
        local = 1.0 - data * data
    elif kind == "sigmoid":
        data = _sigmoid(xd)
        local = data * (1.0 - data)
    else:  # softplus, stable form log1p(exp(-|x|)) + max(x, 0)
        data = np.log1p(np.exp(-np.abs(xd))) + np.maximum(xd, 0.0)
        local = _sigmoid(xd)

    def vjp(g):
        _accum(x, g * local)

    return _result(data.astype(xd.dtype, copy=False), (x,), vjp)


def silu(x: Tensor) -> Tensor:
    return elementwise_activation(x, "silu")


def tanh(x: Tensor) -> Tensor:
    return elementwise_activation(x, "tanh")


def sigmoid(x: Tensor) -> Tensor:
    return elementwise_activation(x, "sigmoid")


def softplus(x: Tensor) -> Tensor:
    return elementwise_activation(x, "softplus")


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)

    def vjp(g):
        _accum(x, g * data)

    return _result(data, (x,), vjp)


def absolute(x: Tensor) -> Tensor:
    data = np.abs(x.data)
    sign = np.sign(x.data)

    def vjp(g):
        _accum(x, g * sign)

    return _result(data, (x,), vjp)


# -- linear algebra ------------------------------------------------------


def matmul(x: Tensor, w: Tensor) -> Tensor:
    """x[..., I] @ w[I, J] -> [..., J]."""
    if w.data.ndim != 2:
        raise ShapeError(f"matmul: weight must be 2-D, got {w.shape}")
    if x.data.ndim < 1 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"matmul: inner extents disagree: x {x.shape} vs w {w.shape}")
    w = _coerce(w, x)
    data = x.data @ w.data

    def vjp(g):
        _accum(x, g @ w.data.T)
        gw = x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, w.shape[1])
        _accum(w, gw)

    return _result(data, (x, w), vjp)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Per-position affine map over the trailing axis (also 1x1 convolution)."""
    out = matmul(x, w)
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ShapeError(f"linear: bias {b.shape} does not match out extent {w.shape[1]}")
        out = add(out, b)
    return out


def depthwise_conv2d(x: Tensor, k: Tensor) -> Tensor:
    """Per-channel 2-D convolution with zero 'same' padding.

    x is [C, H, W], k is [C, kh, kw] with odd kh, kw; each channel is
    convolved only with its own kernel and spatial extents are preserved.
    """
    if x.data.ndim != 3 or k.data.ndim != 3:
        raise ShapeError(f"depthwise_conv2d: need x [C,H,W] and k [C,kh,kw], got {x.shape}, {k.shape}")
    c, h, w = x.shape
    ck, kh, kw = k.shape
    if ck != c:
        raise ShapeError(f"depthwise_conv2d: channel mismatch {c} vs {ck}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"depthwise_conv2d: kernel extents must be odd, got {kh}x{kw}")
    k = _coerce(k, x)
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    data = np.einsum("chwij,cij->chw", win, k.data).astype(x.data.dtype)

    def vjp(g):
        gk = np.einsum("chwij,chw->cij", win, g)
        _accum(k, gk)
        gp = np.pad(g, ((0, 0), (ph, ph), (pw, pw)))
        gwin = np.lib.stride_tricks.sliding_window_view(gp, (kh, kw), axis=(1, 2))
        gx = np.einsum("chwij,cij->chw", gwin, k.data[:, ::-1, ::-1])
        _accum(x, gx.astype(x.data.dtype))

    return _result(data, (x, k), vjp)


def conv1d_vector(v: Tensor, k: Tensor) -> Tensor:
    """1-D correlation of a vector with zero 'same' padding (odd kernel)."""
    if v.data.ndim != 1 or k.data.ndim != 1:
        raise ShapeError(f"conv1d_vector: need 1-D operands, got {v.shape}, {k.shape}")
    (n,), (kn,) = v.shape, k.shape
    if kn % 2 == 0:
        raise ShapeError(f"conv1d_vector: kernel length must be odd, got {kn}")
    k = _coerce(k, v)
    p = (kn - 1) // 2
    vp = np.pad(v.data, (p, p))
    win = np.lib.stride_tricks.sliding_window_view(vp, kn)
    data = win @ k.data

    def vjp(g):
        _accum(k, win.T @ g)
        gp = np.pad(g, (p, p))
        gwin = np.lib.stride_tricks.sliding_window_view(gp, kn)
        _accum(v, gwin @ k.data[::-1])

    return _result(data.astype(v.data.dtype), (v, k), vjp)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the trailing (channel) axis, then scale and shift."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm: gamma/beta must be ({c},), got {gamma.shape}, {beta.shape}")
    if eps <= 0:
        raise ShapeError(f"layer_norm: eps must be positive, got {eps}")
    gamma = _coerce(gamma, x)
    beta = _coerce(beta, x)
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = (x.data - mean) * inv
    data = xhat * gamma.data + beta.data

    def vjp(g):
        _accum(beta, g.reshape(-1, c).sum(axis=0))
        _accum(gamma, (g * xhat).reshape(-1, c).sum(axis=0))
        gg = g * gamma.data
        m1 = gg.mean(axis=-1, keepdims=True)
        m2 = (gg * xhat).mean(axis=-1, keepdims=True)
        _accum(x, ((gg - m1 - xhat * m2) * inv).astype(x.data.dtype))

    return _result(data.astype(x.data.dtype), (x, gamma, beta), vjp)


def global_average_pool(x: Tensor) -> Tensor:
    """[C, H, W] -> [C] spatial mean."""
    if x.data.ndim != 3:
        raise ShapeError(f"global_average_pool: need [C,H,W], got {x.shape}")
    c, h, w = x.shape
    data = x.data.mean(axis=(1, 2))

    def vjp(g):
        _accum(x, np.broadcast_to((g / (h * w))[:, None, None], x.shape))

    return _result(data, (x,), vjp)


# -- shape ops -----------------------------------------------------------


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = x.data.reshape(shape)

    def vjp(g):
        _accum(x, g.reshape(x.shape))

    return _result(data, (x,), vjp)


def permute(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    data = np.ascontiguousarray(x.data.transpose(axes))
    inv = np.argsort(axes)

    def vjp(g):
        _accum(x, g.transpose(inv))

    return _result(data, (x,), vjp)


def flip(x: Tensor, axis: int = 0) -> Tensor:
    data = np.flip(x.data, axis=axis).copy()

    def vjp(g):
        _accum(x, np.flip(g, axis=axis))

    return _result(data, (x,), vjp)


def pad_hw(x: Tensor, extra_h: int, extra_w: int) -> Tensor:
    """Zero-pad a [C, H, W] tensor at the bottom/right edges."""
    if x.data.ndim != 3:
        raise ShapeError(f"pad_hw: need [C,H,W], got {x.shape}")
    data = np.pad(x.data, ((0, 0), (0, extra_h), (0, extra_w)))
    h, w = x.shape[1], x.shape[2]

    def vjp(g):
        _accum(x, g[:, :h, :w])

    return _result(data, (x,), vjp)


def crop_hw(x: Tensor, h: int, w: int) -> Tensor:
    """Keep the top-left h x w window of a [C, H, W] tensor."""
    if x.data.ndim != 3:
        raise ShapeError(f"crop_hw: need [C,H,W], got {x.shape}")
    if h > x.shape[1] or w > x.shape[2]:
        raise ShapeError(f"crop_hw: window {h}x{w} exceeds {x.shape[1]}x{x.shape[2]}")
    data = x.data[:, :h, :w].copy()

    def vjp(g):
        _accum(x, np.pad(g, ((0, 0), (0, x.shape[1] - h), (0, x.shape[2] - w))))

    return _result(data, (x,), vjp)


# -- reductions ----------------------------------------------------------


def tensor_sum(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def vjp(g):
        _accum(x, np.broadcast_to(np.asarray(g, dtype=x.data.dtype), x.shape))

    return _result(data, (x,), vjp)


def tensor_mean(x: Tensor) -> Tensor:
    return mul(tensor_sum(x), 1.0 / x.data.size)


# -- the tape ------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}  # 0 = on stack, 1 = done
    stack: list[tuple[Tensor, Iterable[Tensor]]] = [(root, iter(root._parents))]
    state[id(root)] = 0
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            state[id(node)] = 1
            order.append(node)
            stack.pop()
            continue
        s = state.get(id(nxt))
        if s == 0:
            raise ShapeError("backward: operation record contains a cycle")
        if s is None:
            state[id(nxt)] = 0
            stack.append((nxt, iter(nxt._parents)))
    return order


def backward(loss: Tensor) -> None:
    """Populate gradients of every tensor reachable from the scalar loss."""
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ShapeError("backward: loss does not depend on any tracked tensor")
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._vjp is not None and node.grad is not None:
            node._vjp(node.grad)


# -- parameters and the Adam update ---------------------------------------


class ParamStore:
    """Named parameters plus Adam moment accumulators and a step counter."""

    def __init__(self, precision: str = "f32"):
        if precision not in DTYPES:
            raise ShapeError(f"precision must be one of {sorted(DTYPES)}, got {precision!r}")
        self.precision = precision
        self.params: dict[str, Tensor] = {}
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.step = 0

    @property
    def dtype(self):
        return DTYPES[self.precision]

    def add(self, name: str, data) -> Tensor:
        if name in self.params:
            raise ShapeError(f"parameter {name!r} already registered")
        t = Tensor(np.asarray(data, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self):
        return len(self.params)

    def n_values(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def backward(self, loss: Tensor) -> None:
        """Run the tape; parameters the loss does not reach get zero gradient."""
        self.zero_grad()
        backward(loss)
        for t in self.params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, arr in snap.items():
            self.params[name].data = arr.copy()


def adam_update(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamStore:
    """Bias-corrected Adam step over every parameter; clears gradients."""
    if lr <= 0:
        raise NumericError(f"adam_update: lr must be positive, got {lr}")
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store.params.items():
        if p.grad is None:
            raise NumericError(f"adam_update: parameter {name!r} has no gradient")
        if name not in store.moments:
            store.moments[name] = (np.zeros_like(p.data), np.zeros_like(p.data))
        m, v = store.moments[name]
        g = p.grad.astype(p.data.dtype, copy=False)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data = p.data - (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.data.dtype)
        p.grad = None
    return store


# -- checkpoint file -------------------------------------------------------

CHECKPOINT_MAGIC = b"IMCK1\n"


def save_checkpoint(store: ParamStore, path) -> None:
    """Write magic, length-prefixed JSON header, then raw little-endian values."""
    header = {
        "precision": store.precision,
        "step": store.step,
        "params": [[name, list(t.shape)] for name, t in store.params.items()],
    }
    blob = json.dumps(header).encode("utf-8")
    wire = "<f4" if store.precision == "f32" else "<f8"
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, t in store.params.items():
            fh.write(np.ascontiguousarray(t.data, dtype=wire).tobytes())


def load_checkpoint(path) -> ParamStore:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"bad checkpoint magic {magic!r}")
        raw = fh.read(4)
        if len(raw) < 4:
            raise DataError("truncated checkpoint header")
        (hlen,) = struct.unpack("<I", raw)
        blob = fh.read(hlen)
        if len(blob) < hlen:
            raise DataError("truncated checkpoint header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"unreadable checkpoint header: {exc}") from exc
        store = ParamStore(precision=header["precision"])
        store.step = int(header["step"])
        wire = "<f4" if store.precision == "f32" else "<f8"
        itemsize = 4 if store.precision == "f32" else 8
        for name, shape in header["params"]:
            count = int(np.prod(shape)) if shape else 1
            payload = fh.read(count * itemsize)
            if len(payload) < count * itemsize:
                raise DataError(f"truncated checkpoint payload at parameter {name!r}")
            arr = np.frombuffer(payload, dtype=wire).reshape(shape)
            store.add(name, arr.astype(store.dtype))
        if fh.read(1):
            raise DataError("trailing bytes after checkpoint payload")
    return store
