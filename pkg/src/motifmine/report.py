"""Cluster structure statistics and the motif report artifact.

The report JSON is the contract consumed by the HTTP service and the
review UI: {label, stats, clusters: [{cluster_id, size, members}]} with
members ranked by intra-cluster similarity mass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .clustering import Clustering
from .simgraph import SimilarityGraph, connected_components


@dataclass
class ClusterStats:
    n_clusters: int
    size_quartiles: tuple[float, float, float]
    max_size: int
    frac_gt1: float
    frac_gt3: float
    n_components: int
    n_edges: int


@dataclass
class MotifReport:
    label: str
    clustering: Clustering
    ranked_members: list[np.ndarray]  # per cluster, best-connected first
    stats: ClusterStats
    member_scores: list[np.ndarray] = field(default_factory=list)


def cluster_stats(clustering: Clustering, g: SimilarityGraph) -> ClusterStats:
    """Size quartiles (linear-interpolation convention) and graph counts."""
    if clustering.assignment.shape[0] != g.n:
        raise ValueError("clustering does not cover the graph's vertices")
    sizes = np.bincount(clustering.assignment, minlength=clustering.n_clusters)
    q1, q2, q3 = np.quantile(sizes.astype(np.float64), [0.25, 0.5, 0.75])
    return ClusterStats(
        n_clusters=clustering.n_clusters,
        size_quartiles=(float(q1), float(q2), float(q3)),
        max_size=int(sizes.max()),
        frac_gt1=float(np.mean(sizes > 1)),
        frac_gt3=float(np.mean(sizes > 3)),
        n_components=len(connected_components(g)),
        n_edges=g.n_edges,
    )


def rank_members(clustering: Clustering, g: SimilarityGraph, label: str = "") -> MotifReport:
    """Order each cluster's members by total intra-cluster edge weight.

    Ties fall back to ascending image id, so the ordering is deterministic.
    """
    assign = clustering.assignment
    intra_strength = np.zeros(g.n)
    same = assign[g.edge_i] == assign[g.edge_j]
    np.add.at(intra_strength, g.edge_i[same], g.weights[same])
    np.add.at(intra_strength, g.edge_j[same], g.weights[same])
    ranked, scores = [], []
    for cid in range(clustering.n_clusters):
        members = clustering.members(cid)
        order = np.lexsort((members, -intra_strength[members]))
        ranked.append(members[order])
        scores.append(intra_strength[members[order]])
    return MotifReport(
        label=label,
        clustering=clustering,
        ranked_members=ranked,
        stats=cluster_stats(clustering, g),
        member_scores=scores,
    )


def export_report(report: MotifReport, path) -> None:
    if not report.ranked_members:
        raise ValueError("refusing to export a report with no clusters")
    stats = report.stats
    blob = {
        "label": report.label,
        "method": report.clustering.method,
        "params": report.clustering.params,
        "provenance": report.clustering.provenance,
        "stats": {
            "n_clusters": stats.n_clusters,
            "size_quartiles": list(stats.size_quartiles),
            "max_size": stats.max_size,
            "frac_gt1": stats.frac_gt1,
            "frac_gt3": stats.frac_gt3,
            "n_components": stats.n_components,
            "n_edges": stats.n_edges,
        },
        "clusters": [
            {
                "cluster_id": cid,
                "size": int(members.shape[0]),
                "members": members.tolist(),
                "member_scores": [float(s) for s in report.member_scores[cid]],
            }
            for cid, members in enumerate(report.ranked_members)
        ],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(blob, fh, sort_keys=True)
        fh.write("\n")


def load_report(path) -> dict:
    with open(path, encoding="ascii") as fh:
        return json.load(fh)
