#!/usr/bin/env python3
"""Benchmark the compiled extension against the pure-numpy fallback.

Times the three hot kernels on a grid of sizes and prints a table with
the speedup of the compiled path.  Run from the repository root:

    python benchmarks/bench_backends.py [--repeats 5]
"""

import argparse
import math
import time

import numpy as np

from rffkit import _core_py
from rffkit._sampling import stream

try:
    from rffkit import _core
except ImportError:
    _core = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_dense(rng, repeats):
    rows = []
    for n, d, D in [(2000, 20, 512), (2000, 60, 2048), (20000, 20, 512)]:
        X = rng.standard_normal((n, d))
        omega = rng.standard_normal((D, d))
        b = rng.random(D) * 2 * np.pi
        scale = math.sqrt(2.0 / D)
        rows.append((
            f"dense cos features N={n} d={d} D={D}",
            best_of(lambda: _core.cos_features_dense(X, omega, b, scale),
                    repeats),
            best_of(lambda: _core_py.cos_features_dense(X, omega, b, scale),
                    repeats),
        ))
    return rows


def bench_sparse(rng, repeats):
    rows = []
    for n, d, D, k in [(2000, 20, 512, 2), (20000, 20, 512, 2),
                       (2000, 100, 2048, 4)]:
        X = rng.standard_normal((n, d))
        support = _core_py.floyd_subsets(rng.random((D, k)), d)
        values = rng.standard_normal((D, k))
        b = rng.random(D) * 2 * np.pi
        scale = math.sqrt(2.0 / D)
        rows.append((
            f"sparse cos features N={n} d={d} D={D} k={k}",
            best_of(lambda: _core.cos_features_sparse(
                X, support, values, b, scale), repeats),
            best_of(lambda: _core_py.cos_features_sparse(
                X, support, values, b, scale), repeats),
        ))
    return rows


def bench_enumeration(rng, repeats):
    rows = []
    for d, k in [(16, 4), (20, 10), (24, 8)]:
        w = np.abs(rng.standard_normal(d))
        rows.append((
            f"subset enumeration d={d} k={k} ({math.comb(d, k)} subsets)",
            best_of(lambda: _core.subset_exp_mean(w, k), repeats),
            best_of(lambda: _core_py.subset_exp_mean(w, k), repeats),
        ))
    return rows


def bench_floyd(rng, repeats):
    u = rng.random((200_000, 3))
    return [(
        "floyd subset sampling 200k rows k=3 d=20",
        best_of(lambda: _core.floyd_subsets(u, 20), repeats),
        best_of(lambda: _core_py.floyd_subsets(u, 20), repeats),
    )]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    if _core is None:
        print("compiled extension not built; nothing to compare "
              "(pip install -e . --no-build-isolation)")
        return
    rng = stream(0, 7)
    rows = []
    for bench in (bench_dense, bench_sparse, bench_enumeration, bench_floyd):
        rows.extend(bench(rng, args.repeats))
    width = max(len(name) for name, _, _ in rows)
    print(f"{'case':<{width}}  {'compiled':>10}  {'python':>10}  {'speedup':>8}")
    for name, tc, tp in rows:
        print(f"{name:<{width}}  {tc * 1e3:>8.2f}ms  {tp * 1e3:>8.2f}ms  "
              f"{tp / tc:>7.1f}x")


if __name__ == "__main__":
    main()
