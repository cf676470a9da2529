#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy twins.

Run:  python benchmarks/bench_kernels.py
The numpy column is exactly what the package uses when numba is missing or
NETGEOM_DISABLE_NUMBA=1 is set. Matrix products go through BLAS in both
backends, so the interesting rows are the scalar-loop kernels.
"""

import time

import numpy as np

from netgeom.kernels import numpy_impl

try:
    from netgeom.kernels import numba_impl
except ImportError:
    numba_impl = None


def timeit(fn, *args, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_lsap(rng):
    print(f"{'lsap (assignment)':<28}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for n in (32, 64, 128, 256, 512):
        cost = rng.standard_normal((n, n))
        t_np = timeit(numpy_impl.lsap, cost)
        if numba_impl is None:
            print(f"  n={n:<24}{t_np * 1e3:>10.2f}ms {'-':>12}")
            continue
        numba_impl.lsap(cost)                     # compile outside the timer
        t_nb = timeit(numba_impl.lsap, cost)
        print(f"  n={n:<24}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
              f"{t_np / t_nb:>9.1f}x")


def bench_errors(rng):
    print(f"\n{'error counting':<28}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for p, k in ((10_000, 10), (100_000, 10), (100_000, 2)):
        logits = rng.standard_normal((p, k)).astype(np.float32)
        labels = rng.integers(0, k, p)
        t_np = timeit(numpy_impl.count_argmax_errors, logits, labels)
        if numba_impl is None:
            print(f"  P={p:<7} K={k:<14}{t_np * 1e3:>10.2f}ms {'-':>12}")
            continue
        numba_impl.count_argmax_errors(logits, labels)
        t_nb = timeit(numba_impl.count_argmax_errors, logits, labels)
        print(f"  P={p:<7} K={k:<14}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
              f"{t_np / t_nb:>9.1f}x")


def bench_sign(rng):
    print(f"\n{'sign activation':<28}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for shape in ((1503, 101), (10_000, 201), (100_000, 101)):
        z = rng.standard_normal(shape).astype(np.float32)
        t_np = timeit(numpy_impl.sign_act, z)
        if numba_impl is None:
            print(f"  {str(shape):<26}{t_np * 1e3:>10.2f}ms {'-':>12}")
            continue
        numba_impl.sign_act(z)
        t_nb = timeit(numba_impl.sign_act, z)
        print(f"  {str(shape):<26}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
              f"{t_np / t_nb:>9.1f}x")


def main():
    rng = np.random.default_rng(0)
    if numba_impl is None:
        print("numba unavailable; showing numpy timings only\n")
    bench_lsap(rng)
    bench_errors(rng)
    bench_sign(rng)


if __name__ == "__main__":
    main()
