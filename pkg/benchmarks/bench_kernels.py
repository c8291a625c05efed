#!/usr/bin/env python3
"""Benchmark the compiled similarity kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--sizes N,D ...] [--repeats R]
"""

import argparse
import statistics
import time

import numpy as np

from ilrkit import kernels
from ilrkit.kernels import fallback


def _time(fn, repeats):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return min(samples), statistics.median(samples)


def bench(n, d, repeats):
    rng = np.random.default_rng(0)
    matrix = np.ascontiguousarray(rng.standard_normal((n, d)))
    query = np.ascontiguousarray(rng.standard_normal(d))

    impls = {"numpy": fallback}
    if kernels.BACKEND == "native":
        from ilrkit.kernels import _native

        impls["native"] = _native

    print(f"\n== dot_scores, matrix ({n}, {d}) ==")
    for name, impl in impls.items():
        best, med = _time(lambda: impl.dot_scores(matrix, query), repeats)
        print(f"  {name:>6s}: best {best * 1e6:9.1f} us   median {med * 1e6:9.1f} us")

    small = matrix[: min(n, 2000)]
    print(f"== pairwise_dot, matrix {small.shape} ==")
    for name, impl in impls.items():
        best, med = _time(lambda: impl.pairwise_dot(small), repeats)
        print(f"  {name:>6s}: best {best * 1e3:9.2f} ms   median {med * 1e3:9.2f} ms")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", nargs="+", default=["1000,16", "10000,64", "100000,64"],
                        help="comma-separated N,D pairs")
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    print(f"selected backend: {kernels.BACKEND}")
    if kernels.BACKEND != "native":
        print("(compiled extension unavailable; only the numpy fallback is timed)")
    for size in args.sizes:
        n, d = (int(x) for x in size.split(","))
        bench(n, d, args.repeats)


if __name__ == "__main__":
    main()
