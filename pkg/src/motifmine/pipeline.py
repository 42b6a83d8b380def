"""Pipeline orchestration: ingest -> index -> graph -> connect -> cluster -> report.

Each stage writes file artifacts into the run directory and records a
content key (hash of its inputs and parameters) in manifest.json; re-runs
skip stages whose keys and artifact checksums still match, so runs are
resumable and byte-reproducible for a fixed config and seed.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import clustering as cl
from . import connector, descriptors, evaluation, report, simgraph
from .index import IndexConfig, add, load_index, save_index, train

STAGES = ("ingest", "index", "graph", "connect", "cluster", "report")

FEATURE_TYPES = ("phash", "global_file", "local_file", "tagged")
CONNECTION_NAMES = ("reg", "er", "best", "avg")
CLUSTER_METHODS = ("louvain", "markov", "spectral")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception | str):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    feature: dict
    index: IndexConfig
    graph: dict
    connection: dict
    cluster: dict
    paths: dict

    def __post_init__(self):
        if self.feature.get("type") not in FEATURE_TYPES:
            raise ValueError(f"feature.type must be one of {FEATURE_TYPES}")
        if self.connection.get("strategy") not in CONNECTION_NAMES:
            raise ValueError(f"connection.strategy must be one of {CONNECTION_NAMES}")
        if self.cluster.get("method") not in CLUSTER_METHODS:
            raise ValueError(f"cluster.method must be one of {CLUSTER_METHODS}")
        self.feature.setdefault("name", self.feature["type"])

    def label(self) -> str:
        return "-".join(
            [self.feature["name"], self.connection["strategy"], self.cluster["method"]]
        )

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "index": {
                "n_centroids": self.index.n_centroids,
                "m_subquantizers": self.index.m_subquantizers,
                "n_bits": self.index.n_bits,
                "opq": self.index.opq,
                "kmeans_iters": self.index.kmeans_iters,
                "seed": self.index.seed,
            },
            "graph": self.graph,
            "connection": self.connection,
            "cluster": self.cluster,
            "paths": self.paths,
        }


def config_from_dict(blob: dict, base_dir: str = ".") -> PipelineConfig:
    blob = copy.deepcopy(blob)
    paths = blob.get("paths", {})
    for key in ("corpus", "out"):
        if key not in paths:
            raise ValueError(f"paths.{key} missing from config")
        if not os.path.isabs(paths[key]):
            paths[key] = os.path.normpath(os.path.join(base_dir, paths[key]))
    return PipelineConfig(
        feature=blob.get("feature", {}),
        index=IndexConfig(**blob.get("index", {})),
        graph={"k": 50, "nprobe": 1, "seed": 0, **blob.get("graph", {})},
        connection=blob.get("connection", {}),
        cluster=blob.get("cluster", {}),
        paths=paths,
    )


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        blob = json.load(fh)
    return config_from_dict(blob, base_dir=os.path.dirname(os.path.abspath(path)))


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _key(parts: dict) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()


def read_image_manifest(corpus_dir) -> dict[int, str]:
    """Parse manifest.tsv (`id<TAB>relative path` per line) under corpus_dir."""
    path = os.path.join(corpus_dir, "manifest.tsv")
    if not os.path.exists(path):
        raise FileNotFoundError(f"image manifest not found: {path}")
    mapping: dict[int, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            iid, rel = line.split("\t")
            mapping[int(iid)] = rel
    if not mapping:
        raise ValueError(f"empty image manifest: {path}")
    return mapping


def load_control_groups(corpus_dir) -> list[list[int]]:
    path = os.path.join(corpus_dir, "controls.json")
    if not os.path.exists(path):
        return []
    with open(path, encoding="ascii") as fh:
        return [[int(v) for v in g] for g in json.load(fh).get("groups", [])]


@dataclass
class RunContext:
    config: PipelineConfig
    run_dir: str
    manifest: dict = field(default_factory=dict)

    def art(self, name: str) -> str:
        return os.path.join(self.run_dir, name)


def _stage_fresh(ctx: RunContext, stage: str, key: str, force: bool) -> bool:
    entry = ctx.manifest.get("stages", {}).get(stage)
    if force or not entry or entry.get("key") != key:
        return False
    for name, sha in entry.get("artifacts", {}).items():
        path = ctx.art(name)
        if not os.path.exists(path) or _sha256_file(path) != sha:
            return False
    return True


def _stage_done(ctx: RunContext, stage: str, key: str, artifact_names: list[str]) -> None:
    ctx.manifest.setdefault("stages", {})[stage] = {
        "key": key,
        "artifacts": {name: _sha256_file(ctx.art(name)) for name in artifact_names},
        "built_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


# -- stage bodies --------------------------------------------------------------


def _stage_ingest(ctx: RunContext) -> tuple[str, list[str]]:
    cfg = ctx.config
    corpus = cfg.paths["corpus"]
    feat = cfg.feature
    ftype = feat["type"]
    inputs: dict = {"feature": feat}

    if ftype == "phash":
        mapping = read_image_manifest(corpus)
        inputs["manifest"] = _sha256_file(os.path.join(corpus, "manifest.tsv"))
        hashes = {}
        for iid in sorted(mapping):
            p = os.path.join(corpus, mapping[iid])
            if not os.path.exists(p):
                raise FileNotFoundError(f"image file missing: {p}")
            hashes[str(iid)] = _sha256_file(p)
        inputs["images"] = hashes
        key = _key(inputs)
        if _stage_fresh(ctx, "ingest", key, ctx.manifest.get("_force", False)):
            return key, ["descriptors.mmdf", "reps.npy", "ingest.json"]
        images = [
            descriptors.read_pgm(os.path.join(corpus, mapping[iid]))
            for iid in sorted(mapping)
        ]
        dset = descriptors.phash_descriptors(images)
        reps = dset.vectors.astype(np.float64)
    elif ftype in ("global_file", "local_file"):
        src = os.path.join(corpus, feat["path"])
        if not os.path.exists(src):
            raise FileNotFoundError(f"descriptor file missing: {src}")
        inputs["source"] = _sha256_file(src)
        rep_src = None
        if cfg.connection.get("representatives"):
            rep_src = os.path.join(corpus, cfg.connection["representatives"])
            inputs["representatives"] = _sha256_file(rep_src)
        key = _key(inputs)
        if _stage_fresh(ctx, "ingest", key, ctx.manifest.get("_force", False)):
            return key, ["descriptors.mmdf", "reps.npy", "ingest.json"]
        dset = descriptors.read_descriptors(src)
        want = "global" if ftype == "global_file" else "local"
        if dset.kind != want:
            raise ValueError(f"{src}: expected a {want} descriptor set, got {dset.kind}")
        if rep_src is not None:
            reps = descriptors.read_descriptors(rep_src).vectors.astype(np.float64)
        elif dset.kind == "global":
            reps = dset.vectors.astype(np.float64)
        else:
            # local set without a provided global: per-image mean vector
            reps = np.zeros((dset.image_count, dset.dim))
            for iid in range(dset.image_count):
                rows = dset.rows_for(iid)
                if rows.size == 0:
                    raise ValueError(f"image {iid} has no local features")
                reps[iid] = dset.vectors[rows].mean(axis=0)
    elif ftype == "tagged":
        lsrc = os.path.join(corpus, feat["local_path"])
        gsrc = os.path.join(corpus, feat["global_path"])
        for p in (lsrc, gsrc):
            if not os.path.exists(p):
                raise FileNotFoundError(f"descriptor file missing: {p}")
        inputs["local"] = _sha256_file(lsrc)
        inputs["global"] = _sha256_file(gsrc)
        key = _key(inputs)
        if _stage_fresh(ctx, "ingest", key, ctx.manifest.get("_force", False)):
            return key, ["descriptors.mmdf", "reps.npy", "ingest.json"]
        local = descriptors.read_descriptors(lsrc)
        globs = descriptors.read_descriptors(gsrc)
        model = descriptors.fit_pca(globs, out_dim=int(feat.get("tag_dim", 16)))
        tagged = descriptors.fuse_tags(
            local,
            globs,
            model,
            tag_weight=float(feat.get("tag_weight", 1.0)),
            normalize=bool(feat.get("normalize", True)),
        )
        dset = tagged.fused
        reps = np.stack(
            [
                descriptors.project(model, globs.vectors[globs.rows_for(i)[0]].astype(np.float64))
                for i in range(globs.image_count)
            ]
        )
    else:  # pragma: no cover - guarded by PipelineConfig
        raise ValueError(f"unknown feature type {ftype}")

    descriptors.write_descriptors(dset, ctx.art("descriptors.mmdf"))
    np.save(ctx.art("reps.npy"), reps)
    with open(ctx.art("ingest.json"), "w", encoding="ascii") as fh:
        json.dump(
            {
                "feature": feat,
                "kind": dset.kind,
                "dim": dset.dim,
                "image_count": dset.image_count,
                "n_records": len(dset),
            },
            fh,
            sort_keys=True,
        )
        fh.write("\n")
    return key, ["descriptors.mmdf", "reps.npy", "ingest.json"]


def _stage_index(ctx: RunContext) -> tuple[str, list[str]]:
    cfg = ctx.config
    key = _key(
        {
            "descriptors": _sha256_file(ctx.art("descriptors.mmdf")),
            "index": cfg.to_dict()["index"],
        }
    )
    if _stage_fresh(ctx, "index", key, ctx.manifest.get("_force", False)):
        return key, ["index.mmix"]
    dset = descriptors.read_descriptors(ctx.art("descriptors.mmdf"))
    idx = train(dset.vectors.astype(np.float64), cfg.index)
    add(idx, dset)
    save_index(idx, ctx.art("index.mmix"))
    return key, ["index.mmix"]


def _stage_graph(ctx: RunContext) -> tuple[str, list[str]]:
    cfg = ctx.config
    key = _key(
        {
            "descriptors": _sha256_file(ctx.art("descriptors.mmdf")),
            "index": _sha256_file(ctx.art("index.mmix")),
            "graph": cfg.graph,
        }
    )
    if _stage_fresh(ctx, "graph", key, ctx.manifest.get("_force", False)):
        return key, ["graph.txt", "graph.txt.meta.json"]
    dset = descriptors.read_descriptors(ctx.art("descriptors.mmdf"))
    idx = load_index(ctx.art("index.mmix"))
    g = simgraph.build_graph(
        dset,
        idx,
        k=int(cfg.graph["k"]),
        nprobe=int(cfg.graph["nprobe"]),
        seed=int(cfg.graph["seed"]),
    )
    simgraph.write_graph(g, ctx.art("graph.txt"))
    return key, ["graph.txt", "graph.txt.meta.json"]


def _stage_connect(ctx: RunContext) -> tuple[str, list[str]]:
    cfg = ctx.config
    key = _key(
        {
            "graph": _sha256_file(ctx.art("graph.txt")),
            "reps": _sha256_file(ctx.art("reps.npy")),
            "connection": cfg.connection,
        }
    )
    arts = ["plan.json", "graph_connected.txt", "graph_connected.txt.meta.json"]
    if _stage_fresh(ctx, "connect", key, ctx.manifest.get("_force", False)):
        return key, arts
    g = simgraph.read_graph(ctx.art("graph.txt"))
    strategy = cfg.connection["strategy"]
    if strategy == "reg":
        plan = connector.ConnectionPlan(strategy=connector.STRATEGY_NONE)
    elif strategy == "er":
        plan = connector.connect_er(
            g,
            c=float(cfg.connection.get("c", 1.0)),
            seed=int(cfg.connection.get("seed", 0)),
        )
    else:
        reps = np.load(ctx.art("reps.npy"))
        summaries = connector.component_representatives(g, reps)
        if strategy == "best":
            plan = connector.connect_best(
                g, summaries, proportionality=float(cfg.connection.get("proportionality", 1.0))
            )
        else:
            plan = connector.connect_average(
                g,
                summaries,
                proportionality=float(cfg.connection.get("proportionality", 1.0)),
                k_pairs=int(cfg.connection.get("k_pairs", 1)),
                seed=int(cfg.connection.get("seed", 0)),
            )
    connector.save_plan(plan, ctx.art("plan.json"))
    connected = connector.apply_plan(g, plan)
    simgraph.write_graph(connected, ctx.art("graph_connected.txt"))
    return key, arts


def _stage_cluster(ctx: RunContext) -> tuple[str, list[str]]:
    cfg = ctx.config
    key = _key(
        {
            "graph": _sha256_file(ctx.art("graph_connected.txt")),
            "cluster": cfg.cluster,
        }
    )
    if _stage_fresh(ctx, "cluster", key, ctx.manifest.get("_force", False)):
        return key, ["clustering.json"]
    g = simgraph.read_graph(ctx.art("graph_connected.txt"))
    provenance = {
        "feature": cfg.feature["name"],
        "connection": cfg.connection["strategy"],
    }
    method = cfg.cluster["method"]
    if method == "louvain":
        result = cl.louvain(
            g,
            resolution=float(cfg.cluster.get("resolution", 1.0)),
            seed=int(cfg.cluster.get("seed", 0)),
            provenance=provenance,
        )
    elif method == "markov":
        result = cl.markov(
            g,
            expansion=int(cfg.cluster.get("expansion", 2)),
            inflation=float(cfg.cluster.get("inflation", 2.0)),
            prune_eps=float(cfg.cluster.get("prune_eps", 1e-5)),
            max_iter=int(cfg.cluster.get("max_iter", 100)),
            provenance=provenance,
        )
    else:
        result = cl.spectral(
            g,
            k=int(cfg.cluster.get("k", 150)),
            seed=int(cfg.cluster.get("seed", 0)),
            provenance=provenance,
        )
    cl.save_clustering(result, ctx.art("clustering.json"))
    return key, ["clustering.json"]


def _stage_report(ctx: RunContext) -> tuple[str, list[str]]:
    key = _key(
        {
            "graph": _sha256_file(ctx.art("graph_connected.txt")),
            "clustering": _sha256_file(ctx.art("clustering.json")),
            "label": ctx.config.label(),
        }
    )
    if _stage_fresh(ctx, "report", key, ctx.manifest.get("_force", False)):
        return key, ["report.json"]
    g = simgraph.read_graph(ctx.art("graph_connected.txt"))
    clustering = cl.load_clustering(ctx.art("clustering.json"))
    rep = report.rank_members(clustering, g, label=ctx.config.label())
    report.export_report(rep, ctx.art("report.json"))
    return key, ["report.json"]


_STAGE_BODY = {
    "ingest": _stage_ingest,
    "index": _stage_index,
    "graph": _stage_graph,
    "connect": _stage_connect,
    "cluster": _stage_cluster,
    "report": _stage_report,
}


def cmd_run(config: PipelineConfig | str, force: bool = False) -> dict:
    """Execute all stages; returns the run manifest (also saved to disk)."""
    if isinstance(config, (str, os.PathLike)):
        config = load_config(config)
    run_dir = os.path.join(config.paths["out"], config.label())
    os.makedirs(run_dir, exist_ok=True)
    manifest_path = os.path.join(run_dir, "manifest.json")
    manifest = {}
    if os.path.exists(manifest_path):
        with open(manifest_path, encoding="ascii") as fh:
            manifest = json.load(fh)
    manifest["label"] = config.label()
    manifest["config"] = config.to_dict()
    manifest["corpus"] = config.paths["corpus"]
    manifest["_force"] = force
    ctx = RunContext(config=config, run_dir=run_dir, manifest=manifest)
    for stage in STAGES:
        try:
            key, artifact_names = _STAGE_BODY[stage](ctx)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
        if not _stage_fresh(ctx, stage, key, False) or force:
            _stage_done(ctx, stage, key, artifact_names)
    manifest.pop("_force", None)
    with open(manifest_path, "w", encoding="ascii") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest


def verify_manifest(run_dir) -> dict:
    """Load a run manifest and check all artifact checksums; returns it."""
    path = os.path.join(run_dir, "manifest.json")
    with open(path, encoding="ascii") as fh:
        manifest = json.load(fh)
    for stage, entry in manifest.get("stages", {}).items():
        for name, sha in entry.get("artifacts", {}).items():
            p = os.path.join(run_dir, name)
            if not os.path.exists(p):
                raise FileNotFoundError(f"{stage}: artifact missing: {p}")
            if _sha256_file(p) != sha:
                raise ValueError(f"{stage}: artifact checksum mismatch: {p}")
    return manifest


# -- sweep ---------------------------------------------------------------------


def standard_grid(
    corpus_dir,
    out_dir,
    n_centroids: int = 8,
    spectral_k: int = 8,
    seed: int = 0,
) -> list[PipelineConfig]:
    """Full feature x connection x clustering grid over a generated corpus.

    Features: phash, every g*.mmdf (global), every l*.mmdf (local), and the
    first local tagged with each global.
    """
    names = sorted(os.listdir(corpus_dir))
    globals_ = [n for n in names if n.endswith(".mmdf") and n.startswith("g")]
    locals_ = [n for n in names if n.endswith(".mmdf") and n.startswith("l")]
    features: list[dict] = [{"type": "phash", "name": "phash"}]
    for gname in globals_:
        features.append({"type": "global_file", "name": gname[:-5], "path": gname})
    for lname in locals_:
        features.append({"type": "local_file", "name": lname[:-5], "path": lname})
    for gname in globals_:
        if locals_:
            features.append(
                {
                    "type": "tagged",
                    "name": f"{locals_[0][:-5]}+{gname[:-5]}",
                    "local_path": locals_[0],
                    "global_path": gname,
                }
            )
    configs = []
    for feat in features:
        for conn in CONNECTION_NAMES:
            for method in CLUSTER_METHODS:
                cluster_params: dict = {"method": method, "seed": seed}
                if method == "spectral":
                    cluster_params["k"] = spectral_k
                configs.append(
                    PipelineConfig(
                        feature=copy.deepcopy(feat),
                        index=IndexConfig(
                            n_centroids=n_centroids,
                            m_subquantizers=4,
                            n_bits=4,
                            kmeans_iters=25,
                            seed=seed,
                        ),
                        graph={"k": 50, "nprobe": 1, "seed": seed},
                        connection={"strategy": conn, "c": 1.0, "proportionality": 1.0,
                                    "k_pairs": 1, "seed": seed},
                        cluster=cluster_params,
                        paths={"corpus": str(corpus_dir), "out": str(out_dir)},
                    )
                )
    return configs


SWEEP_COLUMNS = ("label", "accuracy", "n_clusters", "n_components", "n_edges")


def cmd_sweep(
    configs: list[PipelineConfig],
    csv_path,
    n_sessions: int = 2,
    eval_seed: int = 0,
    force: bool = False,
) -> tuple[list[dict], list[tuple[str, str]]]:
    """Run every config, evaluate with the similarity oracle, emit CSV rows.

    Returns (rows, failures); failures are (label, error) pairs and do not
    produce rows.
    """
    if not configs:
        raise ValueError("sweep needs at least one config")
    rows, failures = [], []
    for config in configs:
        label = config.label()
        try:
            cmd_run(config, force=force)
            run_dir = os.path.join(config.paths["out"], label)
            clustering = cl.load_clustering(os.path.join(run_dir, "clustering.json"))
            groups = load_control_groups(config.paths["corpus"])
            # the simulated judge compares raw image representatives, not the
            # run's sparse query graph, so its verdicts are independent of the
            # clustering being judged
            judge = simgraph.dense_similarity_graph(np.load(os.path.join(run_dir, "reps.npy")))
            sessions, answers = evaluation.run_simulated_sessions(
                clustering,
                judge,
                label,
                groups,
                kind=evaluation.ANNOTATOR_ORACLE,
                n_sessions=n_sessions,
                seed=eval_seed,
            )
            acc = evaluation.score(sessions, answers)
            stats = report.load_report(os.path.join(run_dir, "report.json"))["stats"]
            rows.append(
                {
                    "label": label,
                    "accuracy": acc.accuracy,
                    "n_clusters": stats["n_clusters"],
                    "n_components": stats["n_components"],
                    "n_edges": stats["n_edges"],
                }
            )
        except Exception as exc:
            failures.append((label, f"{type(exc).__name__}: {exc}"))
    with open(csv_path, "w", encoding="ascii") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(
                "%s,%.6f,%d,%d,%d\n"
                % (
                    row["label"],
                    row["accuracy"],
                    row["n_clusters"],
                    row["n_components"],
                    row["n_edges"],
                )
            )
    return rows, failures
