"""Benchmark the compiled selective-scan kernel against the numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_scan.py

Shapes mirror real workloads: L is the flattened spatial extent of a feature
map, C the channel width, N the state size. Both forward and backward passes
are timed; the ratio column is numpy time over compiled time.
"""

from __future__ import annotations

import time

import numpy as np

from icemamba import _scan, _scan_np

SHAPES = [
    (256, 16, 16),    # 64x64 grid after 4x patch embedding
    (1024, 16, 16),   # 128x128 grid
    (8512, 48, 16),   # 448x304 grid after 4x patch embedding
]


def time_fn(fn, *args, repeats=5, **kwargs):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best


def bench(dtype=np.float32):
    rng = np.random.default_rng(0)
    if not _scan.COMPILED:
        print("compiled kernel unavailable; timing the numpy kernel only")
    print(f"dtype={np.dtype(dtype).name}")
    header = f"{'L':>6} {'C':>4} {'N':>4} | {'pass':>8} | {'numpy':>10} {'compiled':>10} {'ratio':>7}"
    print(header)
    print("-" * len(header))
    for L, C, N in SHAPES:
        x = rng.normal(size=(L, C)).astype(dtype)
        delta = rng.uniform(0.05, 1.0, size=(L, C)).astype(dtype)
        a = (-rng.uniform(0.1, 2.0, size=(C, N))).astype(dtype)
        b = rng.normal(size=(L, N)).astype(dtype)
        cm = rng.normal(size=(L, N)).astype(dtype)
        d = rng.normal(size=C).astype(dtype)
        gy = rng.normal(size=(L, C)).astype(dtype)

        t_np_f = time_fn(_scan_np.scan_forward, x, delta, a, b, cm, d)
        _, cache = _scan_np.scan_forward(x, delta, a, b, cm, d)
        t_np_b = time_fn(_scan_np.scan_backward, x, delta, a, b, cm, d, cache, gy)

        if _scan.COMPILED:
            t_cy_f = time_fn(_scan.scan_forward, x, delta, a, b, cm, d)
            _, cache = _scan.scan_forward(x, delta, a, b, cm, d)
            t_cy_b = time_fn(_scan.scan_backward, x, delta, a, b, cm, d, cache, gy)
        else:
            t_cy_f = t_cy_b = float("nan")

        for name, t_np, t_cy in (("forward", t_np_f, t_cy_f), ("backward", t_np_b, t_cy_b)):
            ratio = t_np / t_cy if t_cy == t_cy else float("nan")
            print(
                f"{L:>6} {C:>4} {N:>4} | {name:>8} | {t_np * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms "
                f"{ratio:>6.1f}x"
            )


if __name__ == "__main__":
    bench(np.float32)
    print()
    bench(np.float64)
