"""Join disconnected similarity-graph components into one workable graph.

Three strategies: a random baseline that adds edges between component pairs
with probability tuned so the expected count is linear in the component
count, and two similarity-guided schemes scoring component pairs by the
best or the average cosine between their members' representative vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .descriptors import DescriptorSet
from .simgraph import SimilarityGraph, connected_components

STRATEGY_ER = "er"
STRATEGY_BEST = "best"
STRATEGY_AVERAGE = "average"
STRATEGY_NONE = "none"


class StalePlanError(ValueError):
    """Plan references an edge whose endpoints are already connected."""


@dataclass
class ComponentSummary:
    id: int
    members: np.ndarray  # sorted vertex ids
    mean_edge_weight: float  # 0.0 for edgeless components
    representative_vectors: dict[int, np.ndarray]


@dataclass
class ConnectionPlan:
    strategy: str
    params: dict = field(default_factory=dict)
    new_edges: list = field(default_factory=list)  # (i, j, w) vertex pairs, i < j


def _component_mean_weights(g: SimilarityGraph, comps: list[np.ndarray]) -> np.ndarray:
    labels = np.empty(g.n, dtype=np.int64)
    for cid, comp in enumerate(comps):
        labels[comp] = cid
    sums = np.zeros(len(comps))
    counts = np.zeros(len(comps), dtype=np.int64)
    if g.n_edges:
        edge_comp = labels[g.edge_i]  # both endpoints share a component
        np.add.at(sums, edge_comp, g.weights)
        np.add.at(counts, edge_comp, 1)
    means = np.zeros(len(comps))
    has = counts > 0
    means[has] = sums[has] / counts[has]
    return means


def _weight_floor(g: SimilarityGraph) -> float:
    # keeps plan weights on the existing positive scale; 1.0 if no edges yet
    return float(g.weights.min()) if g.n_edges else 1.0


def component_representatives(
    g: SimilarityGraph, desc: DescriptorSet | np.ndarray
) -> list[ComponentSummary]:
    """One summary per component with a representative vector per member.

    ``desc`` is either a global descriptor set or an (image_count, d) array
    of per-image vectors (e.g. projected tags).
    """
    if isinstance(desc, DescriptorSet):
        if desc.kind != "global":
            raise ValueError("representatives need a global descriptor set")
        if desc.image_count < g.n:
            raise ValueError("descriptor set does not cover all vertices")
        vectors = desc.vectors.astype(np.float64)
    else:
        vectors = np.asarray(desc, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] < g.n:
            raise ValueError("need one representative vector per vertex")
    comps = connected_components(g)
    means = _component_mean_weights(g, comps)
    return [
        ComponentSummary(
            id=cid,
            members=comp,
            mean_edge_weight=float(means[cid]),
            representative_vectors={int(v): vectors[v] for v in comp},
        )
        for cid, comp in enumerate(comps)
    ]


def connect_er(g: SimilarityGraph, c: float = 1.0, seed: int = 0) -> ConnectionPlan:
    """Independent coin per component pair, p = min(1, 2c/(N_C - 1)).

    Expected accepted pairs = c * N_C. A drawn pair is joined at uniformly
    random member vertices; the weight is the mean of the two components'
    mean edge weights, floored at the smallest existing positive weight.
    If no pair is drawn (vanishing probability at any realistic N_C), one
    random pair is forced so the plan always reduces the component count.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    comps = connected_components(g)
    n_c = len(comps)
    if n_c < 2:
        raise ValueError(f"need at least 2 components, found {n_c}")
    means = _component_mean_weights(g, comps)
    floor = _weight_floor(g)
    p = min(1.0, 2.0 * c / (n_c - 1))
    rng = np.random.default_rng(seed)

    def draw_edge(a: int, b: int) -> tuple[int, int, float]:
        u = int(rng.choice(comps[a]))
        v = int(rng.choice(comps[b]))
        w = max((means[a] + means[b]) / 2.0, floor)
        return (min(u, v), max(u, v), w)

    chosen = [
        (a, b)
        for a in range(n_c)
        for b in range(a + 1, n_c)
        if rng.random() < p
    ]
    if not chosen:
        a, b = sorted(rng.choice(n_c, size=2, replace=False).tolist())
        chosen = [(a, b)]
    return ConnectionPlan(
        strategy=STRATEGY_ER,
        params={"c": c, "seed": seed, "p": p},
        new_edges=[draw_edge(a, b) for a, b in chosen],
    )


def _unit_rows(vectors: np.ndarray, context: str) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"zero-norm representative vector in {context}")
    return vectors / norms[:, None]


def _rank_pairs(sims: dict[tuple[int, int], float], n_sel: int) -> list[tuple[int, int]]:
    # descending similarity, ties by (component id, component id) ascending
    ranked = sorted(sims, key=lambda ab: (-sims[ab], ab[0], ab[1]))
    return ranked[:n_sel]


def _selection_count(proportionality: float, n_c: int) -> int:
    if proportionality <= 0:
        raise ValueError("proportionality must be positive")
    n_pairs = n_c * (n_c - 1) // 2
    want = int(np.floor(proportionality * n_c + 0.5))  # round half up
    return max(1, min(want, n_pairs))


def connect_best(
    g: SimilarityGraph, summaries: list[ComponentSummary], proportionality: float = 1.0
) -> ConnectionPlan:
    """Join the top component pairs by maximum member-pair cosine.

    Selects round(proportionality * N_C) pairs (capped at the pair count);
    each selected pair is joined exactly at its most similar vertex pair.
    """
    n_c = len(summaries)
    if n_c < 2:
        raise ValueError(f"need at least 2 components, found {n_c}")
    units = {
        s.id: _unit_rows(
            np.stack([s.representative_vectors[int(v)] for v in s.members]),
            f"component {s.id}",
        )
        for s in summaries
    }
    sims: dict[tuple[int, int], float] = {}
    argmax: dict[tuple[int, int], tuple[int, int]] = {}
    for a in range(n_c):
        for b in range(a + 1, n_c):
            cos = np.clip(units[a] @ units[b].T, -1.0, 1.0)
            flat = int(np.argmax(cos))  # first max in row-major order: lowest ids
            ua, vb = divmod(flat, cos.shape[1])
            sims[(a, b)] = float(cos[ua, vb])
            u = int(summaries[a].members[ua])
            v = int(summaries[b].members[vb])
            argmax[(a, b)] = (min(u, v), max(u, v))
    floor = _weight_floor(g)
    new_edges = []
    for a, b in _rank_pairs(sims, _selection_count(proportionality, n_c)):
        w = max(
            sims[(a, b)]
            * (summaries[a].mean_edge_weight + summaries[b].mean_edge_weight) / 2.0,
            floor,
        )
        u, v = argmax[(a, b)]
        new_edges.append((u, v, w))
    return ConnectionPlan(
        strategy=STRATEGY_BEST,
        params={"proportionality": proportionality},
        new_edges=new_edges,
    )


def connect_average(
    g: SimilarityGraph,
    summaries: list[ComponentSummary],
    proportionality: float = 1.0,
    k_pairs: int = 1,
    seed: int = 0,
) -> ConnectionPlan:
    """Join top component pairs by mean cross cosine, at random vertex pairs.

    Pair scoring averages the cosine over every cross pair; each selected
    component pair receives ``k_pairs`` distinct random edges.
    """
    n_c = len(summaries)
    if n_c < 2:
        raise ValueError(f"need at least 2 components, found {n_c}")
    if k_pairs < 1:
        raise ValueError("k_pairs must be >= 1")
    units = {
        s.id: _unit_rows(
            np.stack([s.representative_vectors[int(v)] for v in s.members]),
            f"component {s.id}",
        )
        for s in summaries
    }
    sims = {
        (a, b): float(np.mean(np.clip(units[a] @ units[b].T, -1.0, 1.0)))
        for a in range(n_c)
        for b in range(a + 1, n_c)
    }
    floor = _weight_floor(g)
    rng = np.random.default_rng(seed)
    new_edges = []
    for a, b in _rank_pairs(sims, _selection_count(proportionality, n_c)):
        w = max(
            sims[(a, b)]
            * (summaries[a].mean_edge_weight + summaries[b].mean_edge_weight) / 2.0,
            floor,
        )
        ma, mb = summaries[a].members, summaries[b].members
        n_cross = ma.size * mb.size
        picks = rng.choice(n_cross, size=min(k_pairs, n_cross), replace=False)
        for flat in np.sort(picks):
            ia, ib = divmod(int(flat), mb.size)
            u, v = int(ma[ia]), int(mb[ib])
            new_edges.append((min(u, v), max(u, v), w))
    return ConnectionPlan(
        strategy=STRATEGY_AVERAGE,
        params={"proportionality": proportionality, "k_pairs": k_pairs, "seed": seed},
        new_edges=new_edges,
    )


def apply_plan(g: SimilarityGraph, plan: ConnectionPlan) -> SimilarityGraph:
    """New graph with the plan's edges added; fails on stale plans."""
    if not plan.new_edges:
        return g
    labels = np.empty(g.n, dtype=np.int64)
    for cid, comp in enumerate(connected_components(g)):
        labels[comp] = cid
    merged: dict[tuple[int, int], float] = {
        (int(i), int(j)): float(w)
        for i, j, w in zip(g.edge_i, g.edge_j, g.weights)
    }
    for i, j, w in plan.new_edges:
        i, j = int(i), int(j)
        if not (0 <= i < g.n and 0 <= j < g.n) or i == j:
            raise ValueError(f"invalid plan edge ({i}, {j})")
        if labels[i] == labels[j]:
            raise StalePlanError(
                f"plan edge ({i}, {j}) joins vertices already in one component"
            )
        key = (min(i, j), max(i, j))
        merged[key] = max(merged.get(key, 0.0), float(w))
    keys = sorted(merged)
    meta = dict(g.build_meta)
    meta["connection"] = {"strategy": plan.strategy, **plan.params}
    return SimilarityGraph(
        n=g.n,
        edge_i=np.array([i for i, _ in keys], dtype=np.int64),
        edge_j=np.array([j for _, j in keys], dtype=np.int64),
        weights=np.array([merged[k] for k in keys], dtype=np.float64),
        build_meta=meta,
    )


def save_plan(plan: ConnectionPlan, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(
            {
                "strategy": plan.strategy,
                "params": plan.params,
                "new_edges": [[int(i), int(j), float(w)] for i, j, w in plan.new_edges],
            },
            fh,
            sort_keys=True,
        )
        fh.write("\n")


def load_plan(path) -> ConnectionPlan:
    with open(path, encoding="ascii") as fh:
        blob = json.load(fh)
    return ConnectionPlan(
        strategy=blob["strategy"],
        params=blob["params"],
        new_edges=[(int(i), int(j), float(w)) for i, j, w in blob["new_edges"]],
    )
