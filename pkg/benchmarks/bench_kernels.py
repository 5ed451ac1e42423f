#!/usr/bin/env python3
"""Benchmark the numba-compiled local M-solver against the numpy fallback.

Runs the batched robust-location kernel on weight matrices of realistic
shapes, plus one full leave-one-out bandwidth sweep through the public API.

Usage:
    python benchmarks/bench_kernels.py

The numba timings exclude the first (compilation) call.
"""

import time

import numpy as np

from plmanifold import _kernels
from plmanifold.bandwidth import default_grid, select_bandwidth
from plmanifold.simulation import generate_sample, replication_rng


def bench(func, *args, repeats=7):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        func(*args)
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def kernel_problem(rng, nq, n):
    W = rng.uniform(0.0, 1.0, (nq, n))
    W[rng.random((nq, n)) < 0.5] = 0.0
    W[:, 0] = np.maximum(W[:, 0], 0.05)
    v = rng.normal(0.0, 2.0, n)
    return W, v, np.argsort(v)


def main():
    print(f"active backend: {_kernels.BACKEND}")
    if _kernels.local_m_rows_numba is None:
        print("numba unavailable; nothing to compare (numpy fallback only)")
        return

    rng = np.random.default_rng(0)
    print(f"\n{'shape':>12} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    print("-" * 50)
    for nq, n in [(100, 100), (200, 200), (500, 500), (200, 1000)]:
        W, v, order = kernel_problem(rng, nq, n)
        args = (W, v, order, 1, 1.345, 1.4826, 1e-10, 200)
        _kernels.local_m_rows_numba(*args)  # compile before timing
        t_np = bench(_kernels.local_m_rows_numpy, *args)
        t_nb = bench(_kernels.local_m_rows_numba, *args)
        print(f"{nq}x{n:>7} {t_np * 1e3:>10.2f}ms {t_nb * 1e3:>10.2f}ms "
              f"{t_np / t_nb:>8.1f}x")

    # end-to-end: one robust cross-validation sweep at n = 200
    sample = generate_sample(200, "C0", replication_rng(0, 0))
    grid = default_grid(sample.dataset)

    def sweep():
        select_bandwidth(sample.dataset, grid, mode="robust")

    sweep()  # warm path
    t = bench(sweep, repeats=3)
    print(f"\nfull robust CV sweep (n=200, 8 candidates, {_kernels.BACKEND}): "
          f"{t * 1e3:.0f}ms")


if __name__ == "__main__":
    main()
