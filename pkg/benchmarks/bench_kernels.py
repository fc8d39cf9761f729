#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the (queries x classes) score-matrix computation for a few pool shapes
and all three similarity kinds, and checks that both backends agree.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --queries 5000 --repeats 5
"""

import argparse
import time

import numpy as np

from labelpool._kernels import HAVE_NUMBA, backends

SHAPES = [
    # (classes, per-class pool size, dim) - text pool, mean pool, domain pool
    (100, 1, 768),
    (345, 6, 768),
    (50, 8, 768),
    (595, 2, 768),
]
KIND_NAMES = {0: "l1", 1: "l2", 2: "cosine"}


def bench(fn, args, repeats):
    fn(*args)  # warmup (JIT compile, cache touch)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--queries", type=int, default=2000)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.Generator(np.random.Philox(args.seed))
    table = backends()
    if not HAVE_NUMBA:
        print("numba unavailable or disabled; benchmarking numpy only")

    print(f"{'shape (K,P,D)':>18} {'kind':>7} " + " ".join(f"{n:>12}" for n in table) +
          ("   speedup" if len(table) == 2 else ""))
    for n_classes, pool_size, dim in SHAPES:
        vectors = rng.normal(size=(n_classes * pool_size, dim))
        offsets = np.arange(0, n_classes * pool_size + 1, pool_size, dtype=np.int64)
        queries = rng.normal(size=(args.queries, dim))
        v_norms = np.sqrt(np.einsum("ij,ij->i", vectors, vectors))
        q_norms = np.sqrt(np.einsum("ij,ij->i", queries, queries))
        for kind in (0, 1, 2):
            call = (kind, vectors, offsets, queries, v_norms, q_norms)
            times = {name: bench(fn, call, args.repeats) for name, fn in table.items()}
            results = [table[name](*call) for name in table]
            agree = all(np.allclose(results[0], r, rtol=1e-9, atol=1e-12) for r in results[1:])
            row = f"{f'({n_classes},{pool_size},{dim})':>18} {KIND_NAMES[kind]:>7} "
            row += " ".join(f"{times[name] * 1e3:>10.2f}ms" for name in table)
            if len(times) == 2:
                numba_t = times.get("numba")
                numpy_t = times.get("numpy")
                row += f"   {numpy_t / numba_t:>6.1f}x"
            if not agree:
                row += "  !! backends disagree"
            print(row)


if __name__ == "__main__":
    main()
