"""Compare the JIT kernels against the pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeats N]

The two backends compute the same math; this script reports wall time for
the ADC code-distance accumulation and the exact nearest-centroid scan at
a few representative sizes, plus the max absolute deviation between the
backends' outputs.
"""

import argparse
import time

import numpy as np

from motifmine import kernels


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_adc(rng, n, m=8, ksub=256, repeats=5):
    codes = rng.integers(0, ksub, size=(n, m)).astype(np.uint8)
    lut = rng.random((m, ksub), dtype=np.float32)
    jit = lambda: kernels.accumulate_code_distances(codes, lut)
    ref = lambda: kernels._np_accumulate_code_distances(codes, lut)
    jit()  # warm the JIT cache before timing
    dev = float(np.abs(jit() - ref()).max())
    return best_of(jit, repeats), best_of(ref, repeats), dev


def bench_nearest(rng, n, k, dim=32, repeats=5):
    pts = rng.normal(size=(n, dim))
    cents = rng.normal(size=(k, dim))
    jit = lambda: kernels.nearest_centroid(pts, cents)
    ref = lambda: kernels._np_nearest_centroid(pts, cents)
    jit()
    lj, dj = jit()
    lr, dr = ref()
    dev = float(np.abs(dj - dr).max()) if np.array_equal(lj, lr) else float("nan")
    return best_of(jit, repeats), best_of(ref, repeats), dev


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    print(f"active backend: {kernels.BACKEND} (numba available: {kernels.NUMBA_AVAILABLE})")
    if kernels.BACKEND != "numba":
        print("note: active backend is numpy; both columns time the same code path")
    header = f"{'kernel':<28}{'size':>16}{'backend ms':>12}{'numpy ms':>12}{'speedup':>9}{'max dev':>12}"
    print(header)
    print("-" * len(header))

    for n in (10_000, 100_000, 1_000_000):
        tj, tr, dev = bench_adc(rng, n, repeats=args.repeats)
        print(f"{'adc accumulate':<28}{f'n={n} m=8':>16}{tj * 1e3:>12.3f}{tr * 1e3:>12.3f}"
              f"{tr / tj:>9.2f}{dev:>12.2e}")

    for n, k in ((2_000, 16), (20_000, 16), (20_000, 256)):
        tj, tr, dev = bench_nearest(rng, n, k, repeats=args.repeats)
        print(f"{'nearest centroid':<28}{f'n={n} k={k}':>16}{tj * 1e3:>12.3f}{tr * 1e3:>12.3f}"
              f"{tr / tj:>9.2f}{dev:>12.2e}")


if __name__ == "__main__":
    main()
