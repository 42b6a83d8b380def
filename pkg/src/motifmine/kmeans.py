"""Seeded Lloyd k-means with k-means++ initialization.

Shared by index training (coarse quantizer, PQ codebooks) and spectral
clustering. Deterministic for a fixed seed; empty clusters are re-seeded
at the point currently farthest from its centroid, so no cluster stays
empty while distinct points remain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import nearest_centroid


@dataclass
class KMeansResult:
    centroids: np.ndarray  # (k, d) float64
    labels: np.ndarray  # (n,) int64
    sse_history: list[float]  # within-cluster SSE at each assignment step


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # fewer distinct points than k: duplicate an existing center
            centers[i] = centers[i - 1]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r))
        idx = min(idx, n - 1)
        centers[i] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[i]) ** 2, axis=1))
    return centers


def kmeans(points: np.ndarray, k: int, iters: int = 25, seed: int = 0) -> KMeansResult:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("kmeans requires a non-empty (n, d) array")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds number of points n={n}")

    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(points, k, rng)
    labels = np.full(n, -1, dtype=np.int64)
    sse_history: list[float] = []

    for _ in range(max(1, iters)):
        new_labels, d2 = nearest_centroid(points, centroids)
        sse_history.append(float(d2.sum()))

        # re-seed empty clusters at the farthest point before the update
        counts = np.bincount(new_labels, minlength=k)
        if np.any(counts == 0):
            order = np.argsort(d2)[::-1]
            used = 0
            for c in np.flatnonzero(counts == 0):
                while used < n and counts[new_labels[order[used]]] <= 1:
                    used += 1
                if used >= n:
                    break
                src = order[used]
                used += 1
                counts[new_labels[src]] -= 1
                new_labels[src] = c
                counts[c] = 1
                centroids[c] = points[src]
                d2[src] = 0.0

        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if members.shape[0]:
                centroids[c] = members.mean(axis=0)

    return KMeansResult(centroids=centroids, labels=labels, sse_history=sse_history)
