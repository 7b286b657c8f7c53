"""Pure-numpy selective-scan kernel (fallback for the compiled extension).

Recurrence, per channel c and state n, over steps k = 0..L-1:

    abar[k,c,n] = exp(delta[k,c] * a[c,n])
    h[k,c,n]    = abar[k,c,n] * h[k-1,c,n] + delta[k,c] * b[k,n] * x[k,c]
    y[k,c]      = sum_n cm[k,n] * h[k,c,n] + d[c] * x[k,c]

The backward pass consumes the stored hidden states and walks the chain in
reverse, accumulating the adjoints of every input. Both passes must stay
semantically identical to the compiled kernel in _scan_cy.pyx.
"""

from __future__ import annotations

import numpy as np


def scan_forward(x, delta, a, b, cm, d, want_states: bool = True):
    """Run the recurrence. Returns (y, cache); cache is None unless requested.

    The cache holds the hidden-state history and the discretized transition
    factors so the backward pass never re-exponentiates.
    """
    L, C = x.shape
    N = a.shape[1]
    y = np.empty_like(x)
    h_all = np.empty((L, C, N), dtype=x.dtype) if want_states else None
    abar_all = np.empty((L, C, N), dtype=x.dtype) if want_states else None
    h = np.zeros((C, N), dtype=x.dtype)
    for k in range(L):
        abar = np.exp(delta[k][:, None] * a)
        h = abar * h + (delta[k] * x[k])[:, None] * b[k][None, :]
        if want_states:
            h_all[k] = h
            abar_all[k] = abar
        y[k] = h @ cm[k] + d * x[k]
    return y, ((h_all, abar_all) if want_states else None)


def scan_backward(x, delta, a, b, cm, d, cache, gy):
    """Adjoints of (x, delta, a, b, cm, d) given the output gradient gy."""
    h_all, abar_all = cache
    L, C = x.shape
    N = a.shape[1]
    dx = np.zeros_like(x)
    ddelta = np.zeros_like(delta)
    da = np.zeros_like(a)
    db = np.zeros_like(b)
    dcm = np.zeros_like(cm)
    dd = np.zeros_like(d)
    dh = np.zeros((C, N), dtype=x.dtype)
    for k in range(L - 1, -1, -1):
        g = gy[k]
        hk = h_all[k]
        h_prev = h_all[k - 1] if k > 0 else np.zeros((C, N), dtype=x.dtype)
        abar = abar_all[k]

        dd += g * x[k]
        dx[k] += g * d
        dcm[k] = g @ hk
        dh += g[:, None] * cm[k][None, :]

        dabar = dh * h_prev
        da += dabar * abar * delta[k][:, None]
        ddelta[k] = (dabar * abar * a).sum(axis=1) + (dh @ b[k]) * x[k]
        db[k] = (dh * (delta[k] * x[k])[:, None]).sum(axis=0)
        dx[k] += (dh @ b[k]) * delta[k]
        dh = dh * abar
    return dx, ddelta, da, db, dcm, dd
