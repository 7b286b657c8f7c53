# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled selective-scan kernel.

Semantics are pinned to the numpy twin in _scan_np.py; the two are checked
against each other in the test suite. The recurrence is inherently
sequential over the step index, so the win here is simply C loop speed.
"""

import numpy as np

cimport cython
from libc.math cimport exp, expf

ctypedef fused real:
    float
    double


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _forward(real[:, ::1] x, real[:, ::1] delta, real[:, ::1] a,
                   real[:, ::1] b, real[:, ::1] cm, real[::1] d,
                   real[:, ::1] y, real[:, :, ::1] h_all,
                   real[:, :, ::1] abar_all, real[:, ::1] h,
                   bint want_states) noexcept nogil:
    cdef Py_ssize_t L = x.shape[0]
    cdef Py_ssize_t C = x.shape[1]
    cdef Py_ssize_t N = a.shape[1]
    cdef Py_ssize_t k, c, n
    cdef real abar, hv, acc, dx_k

    for k in range(L):
        for c in range(C):
            acc = 0.0
            dx_k = delta[k, c] * x[k, c]
            for n in range(N):
                if real is float:
                    abar = expf(delta[k, c] * a[c, n])
                else:
                    abar = exp(delta[k, c] * a[c, n])
                hv = abar * h[c, n] + dx_k * b[k, n]
                h[c, n] = hv
                if want_states:
                    h_all[k, c, n] = hv
                    abar_all[k, c, n] = abar
                acc += cm[k, n] * hv
            y[k, c] = acc + d[c] * x[k, c]


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _backward(real[:, ::1] x, real[:, ::1] delta, real[:, ::1] a,
                    real[:, ::1] b, real[:, ::1] cm, real[::1] d,
                    real[:, :, ::1] h_all, real[:, :, ::1] abar_all,
                    real[:, ::1] gy,
                    real[:, ::1] dx, real[:, ::1] ddelta, real[:, ::1] da,
                    real[:, ::1] db, real[:, ::1] dcm, real[::1] dd,
                    real[:, ::1] dh) noexcept nogil:
    cdef Py_ssize_t L = x.shape[0]
    cdef Py_ssize_t C = x.shape[1]
    cdef Py_ssize_t N = a.shape[1]
    cdef Py_ssize_t k, c, n
    cdef real g, abar, h_prev, dabar, dhv, ddel, dxk

    for k in range(L - 1, -1, -1):
        for c in range(C):
            g = gy[k, c]
            dd[c] += g * x[k, c]
            dxk = g * d[c]
            ddel = 0.0
            for n in range(N):
                dcm[k, n] += g * h_all[k, c, n]
                dhv = dh[c, n] + g * cm[k, n]
                abar = abar_all[k, c, n]
                if k > 0:
                    h_prev = h_all[k - 1, c, n]
                else:
                    h_prev = 0.0
                dabar = dhv * h_prev
                da[c, n] += dabar * abar * delta[k, c]
                ddel += dabar * abar * a[c, n] + dhv * b[k, n] * x[k, c]
                db[k, n] += dhv * delta[k, c] * x[k, c]
                dxk += dhv * b[k, n] * delta[k, c]
                dh[c, n] = dhv * abar
            ddelta[k, c] = ddel
            dx[k, c] = dxk


def scan_forward(x, delta, a, b, cm, d, want_states=True):
    L, C = x.shape
    N = a.shape[1]
    y = np.empty_like(x)
    h_all = np.empty((L if want_states else 1, C, N), dtype=x.dtype)
    abar_all = np.empty((L if want_states else 1, C, N), dtype=x.dtype)
    h = np.zeros((C, N), dtype=x.dtype)
    if x.dtype == np.float32:
        _forward[float](x, delta, a, b, cm, d, y, h_all, abar_all, h, want_states)
    else:
        _forward[double](x, delta, a, b, cm, d, y, h_all, abar_all, h, want_states)
    return y, ((h_all, abar_all) if want_states else None)


def scan_backward(x, delta, a, b, cm, d, cache, gy):
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
    if x.dtype == np.float32:
        _backward[float](x, delta, a, b, cm, d, h_all, abar_all, gy, dx, ddelta, da, db, dcm, dd, dh)
    else:
        _backward[double](x, delta, a, b, cm, d, h_all, abar_all, gy, dx, ddelta, da, db, dcm, dd, dh)
    return dx, ddelta, da, db, dcm, dd
