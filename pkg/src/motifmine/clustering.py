"""Graph clustering: Louvain modularity, Markov clustering, spectral.

All methods return a total assignment with dense 0-based cluster ids and
no empty clusters, serialized as JSON {method, params, provenance,
n_clusters, assignment}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .kmeans import kmeans
from .simgraph import SimilarityGraph

METHOD_LOUVAIN = "louvain"
METHOD_MARKOV = "markov"
METHOD_SPECTRAL = "spectral"


@dataclass
class Clustering:
    assignment: np.ndarray  # (n,) int64 cluster id per image id
    n_clusters: int
    method: str
    params: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        counts = np.bincount(self.assignment, minlength=self.n_clusters)
        if self.assignment.min(initial=0) < 0 or counts.size != self.n_clusters:
            raise ValueError("cluster ids must be dense in [0, n_clusters)")
        if np.any(counts == 0):
            raise ValueError("empty cluster id")

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster_id)


def _densify(raw_labels: np.ndarray) -> tuple[np.ndarray, int]:
    uniq, dense = np.unique(raw_labels, return_inverse=True)
    return dense.astype(np.int64), int(uniq.size)


def modularity(g: SimilarityGraph, clustering: Clustering, resolution: float = 1.0) -> float:
    """Weighted Newman modularity of the assignment on g."""
    assign = clustering.assignment
    if assign.shape[0] != g.n:
        raise ValueError("assignment does not cover all vertices")
    if g.n_edges == 0:
        return 0.0
    m = float(g.weights.sum())
    n_c = int(assign.max()) + 1
    intra = np.zeros(n_c)
    same = assign[g.edge_i] == assign[g.edge_j]
    np.add.at(intra, assign[g.edge_i[same]], g.weights[same])
    strength = g.strengths()
    k_c = np.zeros(n_c)
    np.add.at(k_c, assign, strength)
    return float(np.sum(intra / m - resolution * (k_c / (2.0 * m)) ** 2))


# -- Louvain ------------------------------------------------------------------


def _louvain_local_pass(
    adj: list[dict[int, float]],
    loops: np.ndarray,
    resolution: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, bool]:
    """One phase-1 sweep: greedy community moves until no vertex improves."""
    n = len(adj)
    strength = np.array([sum(nb.values()) for nb in adj]) + 2.0 * loops
    m = strength.sum() / 2.0
    if m <= 0:
        return np.arange(n, dtype=np.int64), False
    comm = np.arange(n, dtype=np.int64)
    comm_tot = strength.copy()
    moved_any = False
    while True:
        moved = False
        for v in rng.permutation(n):
            v = int(v)
            old = int(comm[v])
            comm_tot[old] -= strength[v]
            comm[v] = -1
            link: dict[int, float] = {}
            for u, w in adj[v].items():
                cu = int(comm[u])
                if cu >= 0:
                    link[cu] = link.get(cu, 0.0) + w

            def gain_of(c: int) -> float:
                return link.get(c, 0.0) / m - resolution * comm_tot[c] * strength[v] / (2.0 * m * m)

            # staying put is the baseline; candidates scanned in id order so
            # equal gains resolve to the lowest community id
            best_c, best_gain = old, gain_of(old)
            for cand in sorted(link):
                gain = gain_of(cand)
                if gain > best_gain + 1e-12:
                    best_c, best_gain = cand, gain
            comm[v] = best_c
            comm_tot[best_c] += strength[v]
            if best_c != old:
                moved = moved_any = True
        if not moved:
            break
    return comm, moved_any


def _aggregate(
    adj: list[dict[int, float]], loops: np.ndarray, comm: np.ndarray
) -> tuple[list[dict[int, float]], np.ndarray, np.ndarray]:
    dense, n_new = _densify(comm)
    new_adj: list[dict[int, float]] = [dict() for _ in range(n_new)]
    new_loops = np.zeros(n_new)
    for v, nb in enumerate(adj):
        cv = int(dense[v])
        new_loops[cv] += loops[v]
        for u, w in nb.items():
            if u <= v:
                continue
            cu = int(dense[u])
            if cu == cv:
                new_loops[cv] += w
            else:
                new_adj[cv][cu] = new_adj[cv].get(cu, 0.0) + w
                new_adj[cu][cv] = new_adj[cu].get(cv, 0.0) + w
    return new_adj, new_loops, dense


def _louvain_once(g: SimilarityGraph, resolution: float, rng: np.random.Generator) -> np.ndarray:
    adj: list[dict[int, float]] = [dict() for _ in range(g.n)]
    for i, j, w in zip(g.edge_i, g.edge_j, g.weights):
        adj[int(i)][int(j)] = float(w)
        adj[int(j)][int(i)] = float(w)
    loops = np.zeros(g.n)
    mapping = np.arange(g.n, dtype=np.int64)
    while True:
        comm, moved = _louvain_local_pass(adj, loops, resolution, rng)
        if not moved:
            break
        adj, loops, dense = _aggregate(adj, loops, comm)
        mapping = dense[mapping]
        if len(adj) <= 1:
            break
    return mapping


def louvain(
    g: SimilarityGraph,
    resolution: float = 1.0,
    seed: int = 0,
    restarts: int = 8,
    provenance: dict | None = None,
) -> Clustering:
    """Two-phase modularity maximization with seeded sweep order.

    Single greedy sweeps stall in shallow local optima on small dense
    graphs, so the search restarts from ``restarts`` seeded sweep orders
    and keeps the highest-modularity assignment (first one wins ties).
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best_assign, best_k, best_q = None, 0, -np.inf
    for r in range(restarts):
        rng = np.random.default_rng((seed, r))
        assignment, n_clusters = _densify(_louvain_once(g, resolution, rng))
        q = modularity(
            g, Clustering(assignment, n_clusters, METHOD_LOUVAIN), resolution
        )
        if q > best_q + 1e-15:
            best_assign, best_k, best_q = assignment, n_clusters, q
    return Clustering(
        assignment=best_assign,
        n_clusters=best_k,
        method=METHOD_LOUVAIN,
        params={"resolution": resolution, "seed": seed, "restarts": restarts},
        provenance=provenance or {},
    )


# -- Markov clustering --------------------------------------------------------


def _mcl_matrix(g: SimilarityGraph) -> np.ndarray:
    """Column-stochastic start matrix: adjacency plus max-incident self-loops."""
    a = g.adjacency()
    loop = a.max(axis=1)
    loop[loop <= 0] = 1.0
    np.fill_diagonal(a, loop)
    return a / a.sum(axis=0, keepdims=True)


def _mcl_steps(m, expansion, inflation, prune_eps, max_iter):
    """Yield (matrix, converged) after each expand/inflate/prune round.

    Stops early once the matrix is idempotent under expansion (within
    1e-8); pruning keeps each column's largest entry so no column empties.
    """
    n = m.shape[0]
    for _ in range(max_iter):
        expanded = np.linalg.matrix_power(m, expansion)
        if np.max(np.abs(expanded - m)) < 1e-8:
            yield m, True
            return
        inflated = expanded ** inflation
        keep = inflated >= prune_eps
        keep[np.argmax(inflated, axis=0), np.arange(n)] = True
        inflated[~keep] = 0.0
        m = inflated / inflated.sum(axis=0, keepdims=True)
        yield m, False


def markov(
    g: SimilarityGraph,
    expansion: int = 2,
    inflation: float = 2.0,
    prune_eps: float = 1e-5,
    max_iter: int = 100,
    provenance: dict | None = None,
) -> Clustering:
    """Markov clustering: alternate matrix power and elementwise inflation.

    Self-loops use each vertex's maximum incident weight (1.0 when the
    vertex has no edges) so the walk can stay put. Clusters are the weakly
    connected components of the converged matrix's support; singletons are
    kept as their own clusters.
    """
    if expansion < 2:
        raise ValueError("expansion must be >= 2")
    if inflation <= 1.0:
        raise ValueError("inflation must be > 1")
    m = _mcl_matrix(g)
    converged = False
    for m, converged in _mcl_steps(m, expansion, inflation, prune_eps, max_iter):
        pass
    support = (m > prune_eps)
    sym = support | support.T
    assignment = _support_components(sym)
    assignment, n_clusters = _densify(assignment)
    return Clustering(
        assignment=assignment,
        n_clusters=n_clusters,
        method=METHOD_MARKOV,
        params={
            "expansion": expansion,
            "inflation": inflation,
            "prune_eps": prune_eps,
            "max_iter": max_iter,
            "converged": converged,
        },
        provenance=provenance or {},
    )


def _support_components(sym: np.ndarray) -> np.ndarray:
    n = sym.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for s in range(n):
        if labels[s] >= 0:
            continue
        stack = [s]
        labels[s] = nxt
        while stack:
            v = stack.pop()
            for u in np.flatnonzero(sym[v]):
                if labels[u] < 0:
                    labels[u] = nxt
                    stack.append(int(u))
        nxt += 1
    return labels


# -- spectral -----------------------------------------------------------------


def spectral(
    g: SimilarityGraph,
    k: int = 150,
    seed: int = 0,
    provenance: dict | None = None,
) -> Clustering:
    """k-means over the k lowest-eigenvalue Laplacian eigenvectors.

    Empty k-means cells are dropped and ids re-densified, so the output can
    have fewer than k clusters.
    """
    if not 1 <= k <= g.n:
        raise ValueError(f"k must be in [1, n={g.n}]")
    a = g.adjacency()
    lap = np.diag(a.sum(axis=1)) - a
    if g.n <= 2048:
        _, vecs = eigh(lap, subset_by_index=[0, k - 1])
    else:
        from scipy.sparse import csr_matrix
        from scipy.sparse.linalg import eigsh

        _, vecs = eigsh(csr_matrix(lap), k=k, which="SM", tol=1e-8)
    embedding = np.ascontiguousarray(vecs[:, :k])
    labels = kmeans(embedding, k, iters=100, seed=seed).labels
    assignment, n_clusters = _densify(labels)
    return Clustering(
        assignment=assignment,
        n_clusters=n_clusters,
        method=METHOD_SPECTRAL,
        params={"k": k, "seed": seed},
        provenance=provenance or {},
    )


# -- serialization ------------------------------------------------------------


def save_clustering(clustering: Clustering, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(
            {
                "method": clustering.method,
                "params": clustering.params,
                "provenance": clustering.provenance,
                "n_clusters": clustering.n_clusters,
                "assignment": clustering.assignment.tolist(),
            },
            fh,
            sort_keys=True,
        )
        fh.write("\n")


def load_clustering(path) -> Clustering:
    with open(path, encoding="ascii") as fh:
        blob = json.load(fh)
    return Clustering(
        assignment=np.array(blob["assignment"], dtype=np.int64),
        n_clusters=int(blob["n_clusters"]),
        method=blob["method"],
        params=blob["params"],
        provenance=blob["provenance"],
    )
