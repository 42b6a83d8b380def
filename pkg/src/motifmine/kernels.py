"""Hot numeric inner loops, JIT-compiled with numba when available.

Set MOTIFMINE_NO_NUMBA=1 to force the pure-numpy fallbacks (same math,
same results up to floating-point associativity). ``BACKEND`` reports
which path is active. ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "NUMBA_AVAILABLE",
    "accumulate_code_distances",
    "nearest_centroid",
]


def _np_accumulate_code_distances(codes: np.ndarray, lut: np.ndarray) -> np.ndarray:
    """Sum per-subquantizer lookup-table entries for every stored code.

    codes: (n, m) integer code words; lut: (m, ksub) float32 partial
    squared distances. Returns (n,) float32 squared distances.
    """
    n, m = codes.shape
    out = np.zeros(n, dtype=np.float32)
    for j in range(m):
        out += lut[j, codes[:, j]]
    return out


def _np_nearest_centroid(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact nearest centroid per point by squared L2.

    Accumulates (x - c)^2 directly rather than x^2 + c^2 - 2xc so the
    fallback matches the JIT path bit-for-bit at well-separated margins.
    Blocked over points to bound the (block, k, d) intermediate.
    """
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    block = max(1, int(2**22 // max(1, centroids.size)))
    for start in range(0, n, block):
        end = min(start + block, n)
        diff = points[start:end, None, :].astype(np.float64) - centroids[None, :, :].astype(np.float64)
        d2 = np.einsum("bkd,bkd->bk", diff, diff)
        labels[start:end] = np.argmin(d2, axis=1)
        dists[start:end] = d2[np.arange(end - start), labels[start:end]]
    return labels, dists


_env = os.environ.get("MOTIFMINE_NO_NUMBA", "")
_numba_wanted = _env in ("", "0")

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised via MOTIFMINE_NO_NUMBA instead
    NUMBA_AVAILABLE = False

if NUMBA_AVAILABLE and _numba_wanted:
    BACKEND = "numba"

    @njit(cache=True)
    def _nb_accumulate_code_distances(codes, lut):
        n, m = codes.shape
        out = np.zeros(n, dtype=np.float32)
        for i in range(n):
            acc = np.float32(0.0)
            for j in range(m):
                acc += lut[j, codes[i, j]]
            out[i] = acc
        return out

    @njit(cache=True)
    def _nb_nearest_centroid(points, centroids):
        n, d = points.shape
        k = centroids.shape[0]
        labels = np.empty(n, dtype=np.int64)
        dists = np.empty(n, dtype=np.float64)
        for i in range(n):
            best = -1
            best_d = np.inf
            for c in range(k):
                acc = 0.0
                for t in range(d):
                    diff = float(points[i, t]) - float(centroids[c, t])
                    acc += diff * diff
                if acc < best_d:
                    best_d = acc
                    best = c
            labels[i] = best
            dists[i] = best_d
        return labels, dists

    def accumulate_code_distances(codes: np.ndarray, lut: np.ndarray) -> np.ndarray:
        return _nb_accumulate_code_distances(
            np.ascontiguousarray(codes), np.ascontiguousarray(lut, dtype=np.float32)
        )

    def nearest_centroid(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _nb_nearest_centroid(
            np.ascontiguousarray(points, dtype=np.float64),
            np.ascontiguousarray(centroids, dtype=np.float64),
        )

else:
    BACKEND = "numpy"

    def accumulate_code_distances(codes: np.ndarray, lut: np.ndarray) -> np.ndarray:
        return _np_accumulate_code_distances(codes, np.asarray(lut, dtype=np.float32))

    def nearest_centroid(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _np_nearest_centroid(
            np.asarray(points, dtype=np.float64), np.asarray(centroids, dtype=np.float64)
        )
