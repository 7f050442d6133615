#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-NumPy fallback.

Runs each hot kernel on small (synthetic-benchmark sized) and large
(real-backbone sized) inputs, reports best-of-N wall times and speedups, and
checks that the two implementations agree numerically.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from finercam.kernels import _numpy_impl
from finercam.rng import StreamRng

try:
    from finercam.kernels import _numba_impl
except ImportError:
    _numba_impl = None


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def cases():
    rng = StreamRng(2024)
    img_s = rng.uniform((64, 64, 3)).astype(np.float32)
    ker_s = rng.normal((16, 8, 8, 3), std=0.05).astype(np.float32)
    img_l = rng.uniform((224, 224, 3)).astype(np.float32)
    ker_l = rng.normal((32, 16, 16, 3), std=0.02).astype(np.float32)
    maps_s = rng.normal((16, 8, 8)).astype(np.float32)
    maps_l = rng.normal((512, 14, 14)).astype(np.float32)
    w_s = rng.normal(16)
    w_l = rng.normal(512)
    grid = rng.uniform((8, 8)).astype(np.float32)

    yield "conv 64x64x3 k16s8", lambda impl: impl.conv2d_stride(img_s, ker_s, 8, True)
    yield "conv 224x224x3 k32s16", lambda impl: impl.conv2d_stride(img_l, ker_l, 16, True)
    yield "bilinear 8x8 -> 224x224", lambda impl: impl.bilinear_resize(grid, 224, 224)
    yield "weighted_sum K=16", lambda impl: impl.weighted_sum(maps_s, w_s)
    yield "weighted_sum K=512", lambda impl: impl.weighted_sum(maps_l, w_l)
    yield "relu_grad_sum K=512", lambda impl: impl.relu_grad_sum(maps_l, np.abs(maps_l) - 0.5)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    if _numba_impl is None:
        print("numba unavailable; nothing to compare")
        return 0

    print(f"{'kernel':<26} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    worst_rel = 0.0
    for name, call in cases():
        out_np = call(_numpy_impl).astype(np.float64)
        out_nb = call(_numba_impl).astype(np.float64)  # first call compiles
        scale = max(1.0, float(np.abs(out_np).max()))
        worst_rel = max(worst_rel, float(np.abs(out_np - out_nb).max()) / scale)
        t_np = best_of(lambda: call(_numpy_impl), args.repeats)
        t_nb = best_of(lambda: call(_numba_impl), args.repeats)
        print(f"{name:<26} {t_np * 1e3:>9.3f}ms {t_nb * 1e3:>9.3f}ms {t_np / t_nb:>7.1f}x")

    print(f"\nmax relative |numpy - numba| across kernels: {worst_rel:.2e}")
    if worst_rel > 1e-6:
        print("FAIL: implementations disagree beyond 1e-6 relative")
        return 1
    print("OK: implementations agree within 1e-6 relative")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
