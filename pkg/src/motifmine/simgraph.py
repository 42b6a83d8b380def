"""Weighted image-similarity graph built from index query results.

Vertices are image ids; an edge weight is the tanh-mapped vote mass between
two images. Graph text format: header ``# mm-graph v1 n=<N>`` followed by
one ``i j w`` line per edge (w at 9 significant digits), with build
metadata in a JSON sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .descriptors import DescriptorSet, TaggedDescriptorSet
from .index import IvfPqIndex, QueryHit, query

SCORE_EPS = 1e-9


class GraphBuildError(RuntimeError):
    """Corpus cannot be built into a graph satisfying the degree invariant."""


@dataclass
class SimilarityGraph:
    n: int
    edge_i: np.ndarray  # (e,) int64, edge_i[t] < edge_j[t]
    edge_j: np.ndarray
    weights: np.ndarray  # (e,) float64, all positive finite
    build_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.edge_i = np.asarray(self.edge_i, dtype=np.int64)
        self.edge_j = np.asarray(self.edge_j, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        e = self.edge_i.shape[0]
        if self.edge_j.shape != (e,) or self.weights.shape != (e,):
            raise ValueError("edge arrays must have equal length")
        if e:
            if self.edge_i.min() < 0 or self.edge_j.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            if np.any(self.edge_i >= self.edge_j):
                raise ValueError("edges must satisfy i < j (no self-loops)")
            if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
                raise ValueError("edge weights must be positive and finite")
            pairs = self.edge_i * self.n + self.edge_j
            if np.unique(pairs).size != e:
                raise ValueError("duplicate edges")

    @property
    def n_edges(self) -> int:
        return int(self.edge_i.shape[0])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edge_i, 1)
        np.add.at(deg, self.edge_j, 1)
        return deg

    def strengths(self) -> np.ndarray:
        s = np.zeros(self.n, dtype=np.float64)
        np.add.at(s, self.edge_i, self.weights)
        np.add.at(s, self.edge_j, self.weights)
        return s

    def adjacency(self) -> np.ndarray:
        """Dense symmetric weight matrix; intended for small graphs."""
        a = np.zeros((self.n, self.n), dtype=np.float64)
        a[self.edge_i, self.edge_j] = self.weights
        a[self.edge_j, self.edge_i] = self.weights
        return a


def similarity_from_hits(hits: list[QueryHit], self_image: int) -> dict[int, float]:
    """Per-image vote mass: s_i = sum of 1 - tanh(d) over that image's hits.

    Hits from ``self_image`` are excluded; images whose total is <= 1e-9
    are omitted so downstream edges stay strictly positive.
    """
    scores: dict[int, float] = {}
    for h in hits:
        if h.distance < 0:
            raise ValueError(f"negative hit distance {h.distance}")
        if h.image_id == self_image:
            continue
        scores[h.image_id] = scores.get(h.image_id, 0.0) + (1.0 - np.tanh(h.distance))
    return {i: s for i, s in scores.items() if s > SCORE_EPS}


def build_graph(
    desc: DescriptorSet | TaggedDescriptorSet,
    index: IvfPqIndex,
    k: int = 50,
    nprobe: int = 1,
    seed: int = 0,
    allow_singleton: bool = False,
) -> SimilarityGraph:
    """Grow edges by querying random batches of still-isolated images.

    Each round samples 10% (at least 1) of the images that are isolated and
    not yet queried, queries every feature they own, and adds the resulting
    weighted edges (max-merge on re-encounter). Stops once every image has
    either gained an edge or been queried; any image still isolated at that
    point is a build failure.
    """
    if isinstance(desc, TaggedDescriptorSet):
        base = desc.fused
    else:
        base = desc
    if k < 1:
        raise ValueError("k must be >= 1")
    n = base.image_count
    if n == 0:
        raise ValueError("empty corpus")
    if n == 1:
        if allow_singleton:
            return SimilarityGraph(
                n=1,
                edge_i=np.empty(0, dtype=np.int64),
                edge_j=np.empty(0, dtype=np.int64),
                weights=np.empty(0, dtype=np.float64),
                build_meta={"kind": base.kind, "k": k, "nprobe": nprobe, "seed": seed},
            )
        raise GraphBuildError("single-image corpus cannot form edges")

    rng = np.random.default_rng(seed)
    edges: dict[tuple[int, int], float] = {}
    degree = np.zeros(n, dtype=bool)
    visited = np.zeros(n, dtype=bool)

    def record(i: int, j: int, w: float) -> None:
        key = (i, j) if i < j else (j, i)
        prev = edges.get(key)
        if prev is None or w > prev:
            edges[key] = w
        degree[i] = degree[j] = True

    while True:
        candidates = np.flatnonzero(~degree & ~visited)
        if candidates.size == 0:
            break
        batch_size = max(1, candidates.size // 10)
        batch = rng.choice(candidates, size=batch_size, replace=False)
        for v in np.sort(batch):
            v = int(v)
            visited[v] = True
            hits: list[QueryHit] = []
            for row in base.rows_for(v):
                hits.extend(query(index, base.vectors[row].astype(np.float64), k, nprobe))
            for u, s in similarity_from_hits(hits, v).items():
                record(v, u, s)

    if not degree.all():
        bad = np.flatnonzero(~degree)
        raise GraphBuildError(
            f"{bad.size} image(s) stayed isolated (first: {bad[:5].tolist()}); "
            "raise k/nprobe or check descriptors"
        )

    keys = sorted(edges)
    return SimilarityGraph(
        n=n,
        edge_i=np.array([i for i, _ in keys], dtype=np.int64),
        edge_j=np.array([j for _, j in keys], dtype=np.int64),
        weights=np.array([edges[k_] for k_ in keys], dtype=np.float64),
        build_meta={"kind": base.kind, "k": k, "nprobe": nprobe, "seed": seed},
    )


def dense_similarity_graph(vectors: np.ndarray) -> SimilarityGraph:
    """Exact all-pairs graph over one representative vector per image.

    Edge weight is 1 - tanh(L2 distance); pairs at or below 1e-9 are
    dropped. Quadratic in the corpus size, so meant for small corpora:
    evaluation baselines and simulated-annotator ground truth, not the
    index-backed build path.
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 1:
        raise ValueError("need a (n, dim) matrix with n >= 1")
    n = v.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    d = np.linalg.norm(v[iu] - v[ju], axis=1)
    w = 1.0 - np.tanh(d)
    keep = w > SCORE_EPS
    return SimilarityGraph(
        n=n,
        edge_i=iu[keep],
        edge_j=ju[keep],
        weights=w[keep],
        build_meta={"builder": "dense", "n": int(n)},
    )


def connected_components(g: SimilarityGraph) -> list[np.ndarray]:
    """Vertex sets of undirected components, ordered by smallest member."""
    parent = np.arange(g.n, dtype=np.int64)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in zip(g.edge_i, g.edge_j):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(int(v)) for v in range(g.n)], dtype=np.int64)
    comps = [np.flatnonzero(roots == r) for r in np.unique(roots)]
    return sorted(comps, key=lambda c: int(c[0]))


def component_labels(g: SimilarityGraph) -> np.ndarray:
    """(n,) dense component id per vertex, ids ordered by smallest member."""
    labels = np.empty(g.n, dtype=np.int64)
    for cid, comp in enumerate(connected_components(g)):
        labels[comp] = cid
    return labels


def write_graph(g: SimilarityGraph, path, meta_path=None) -> None:
    path = str(path)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# mm-graph v1 n={g.n}\n")
        for i, j, w in zip(g.edge_i, g.edge_j, g.weights):
            fh.write("%d %d %.9g\n" % (i, j, w))
    with open(meta_path or path + ".meta.json", "w", encoding="ascii") as fh:
        json.dump(g.build_meta, fh, sort_keys=True)
        fh.write("\n")


def read_graph(path, meta_path=None) -> SimilarityGraph:
    path = str(path)
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip()
        if not header.startswith("# mm-graph v1 n="):
            raise ValueError(f"{path}: bad graph header {header!r}")
        n = int(header.split("n=")[1])
        ei, ej, ws = [], [], []
        for line in fh:
            if not line.strip():
                continue
            a, b, w = line.split()
            ei.append(int(a))
            ej.append(int(b))
            ws.append(float(w))
    meta_file = meta_path or path + ".meta.json"
    try:
        with open(meta_file, encoding="ascii") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        meta = {}
    return SimilarityGraph(
        n=n,
        edge_i=np.array(ei, dtype=np.int64),
        edge_j=np.array(ej, dtype=np.int64),
        weights=np.array(ws, dtype=np.float64),
        build_meta=meta,
    )
