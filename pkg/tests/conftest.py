"""Shared fixtures and the central-finite-difference gradient oracle."""

from __future__ import annotations

import numpy as np
import pytest

from icemamba.tensor import Tensor, backward


def fd_gradient(fn, arrays, index, eps=1e-6):
    """Central finite differences of a scalar fn w.r.t. arrays[index].

    fn takes plain numpy arrays and returns a float. Returns an array of
    the same shape as arrays[index].
    """
    arrays = [np.asarray(a, dtype=np.float64).copy() for a in arrays]
    target = arrays[index]
    grad = np.zeros_like(target)
    flat = target.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(*arrays)
        flat[i] = orig - eps
        lo = fn(*arrays)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def autodiff_gradients(build_loss, arrays):
    """Run build_loss over float64 Tensors requiring grad; return their grads."""
    tensors = [Tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in arrays]
    loss = build_loss(*tensors)
    backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def assert_grads_close(build_loss, arrays, rtol=1e-5, eps=1e-6):
    """Autodiff gradients vs central differences for every input array."""
    grads = autodiff_gradients(build_loss, arrays)

    def scalar_fn(*arrs):
        ts = [Tensor(a, dtype=np.float64) for a in arrs]
        return float(build_loss(*ts).data)

    for i, g in enumerate(grads):
        ref = fd_gradient(scalar_fn, arrays, i, eps=eps)
        scale = max(np.abs(ref).max(), np.abs(g).max(), 1e-8)
        err = np.abs(g - ref).max() / scale
        assert err < rtol, f"input {i}: relative gradient error {err:.3e} >= {rtol}"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
