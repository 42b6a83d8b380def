"""Command-line interface: per-stage commands plus run, sweep, and serve."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import clustering as cl
from . import connector, descriptors, evaluation, pipeline, report, simgraph
from .index import IndexConfig, add, load_index, save_index, train
from .service import serve


def _cmd_ingest(args) -> int:
    mapping = pipeline.read_image_manifest(args.corpus)
    missing = [
        rel for rel in mapping.values()
        if not os.path.exists(os.path.join(args.corpus, rel))
    ]
    mmdf = sorted(n for n in os.listdir(args.corpus) if n.endswith(".mmdf"))
    files = {}
    for name in mmdf:
        dset = descriptors.read_descriptors(os.path.join(args.corpus, name))
        files[name] = {"kind": dset.kind, "dim": dset.dim, "records": len(dset)}
    summary = {
        "corpus": args.corpus,
        "n_images": len(mapping),
        "missing_images": missing,
        "descriptor_files": files,
        "control_groups": pipeline.load_control_groups(args.corpus),
    }
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 1 if missing else 0


def _cmd_phash(args) -> int:
    mapping = pipeline.read_image_manifest(args.corpus)
    images = [
        descriptors.read_pgm(os.path.join(args.corpus, mapping[iid]))
        for iid in sorted(mapping)
    ]
    dset = descriptors.phash_descriptors(images)
    descriptors.write_descriptors(dset, args.out)
    print(f"wrote {len(dset)} hashes (dim {dset.dim}) to {args.out}")
    return 0


def _cmd_index(args) -> int:
    dset = descriptors.read_descriptors(args.descriptors)
    config = IndexConfig(
        n_centroids=args.n_centroids,
        m_subquantizers=args.m,
        n_bits=args.n_bits,
        opq=args.opq,
        kmeans_iters=args.kmeans_iters,
        seed=args.seed,
    )
    idx = train(dset.vectors.astype(np.float64), config)
    add(idx, dset)
    save_index(idx, args.out)
    print(f"indexed {idx.n_features} vectors into {config.n_centroids} lists -> {args.out}")
    return 0


def _cmd_graph(args) -> int:
    dset = descriptors.read_descriptors(args.descriptors)
    idx = load_index(args.index)
    g = simgraph.build_graph(dset, idx, k=args.k, nprobe=args.nprobe, seed=args.seed)
    simgraph.write_graph(g, args.out)
    print(f"graph: {g.n} vertices, {g.n_edges} edges -> {args.out}")
    return 0


def _cmd_connect(args) -> int:
    g = simgraph.read_graph(args.graph)
    if args.strategy == "reg":
        plan = connector.ConnectionPlan(strategy=connector.STRATEGY_NONE)
    elif args.strategy == "er":
        plan = connector.connect_er(g, c=args.c, seed=args.seed)
    else:
        if not args.representatives:
            raise SystemExit("--representatives (global .mmdf or .npy) required for best/avg")
        if args.representatives.endswith(".npy"):
            reps = np.load(args.representatives)
        else:
            reps = descriptors.read_descriptors(args.representatives).vectors.astype(np.float64)
        summaries = connector.component_representatives(g, reps)
        if args.strategy == "best":
            plan = connector.connect_best(g, summaries, proportionality=args.proportionality)
        else:
            plan = connector.connect_average(
                g, summaries, proportionality=args.proportionality,
                k_pairs=args.k_pairs, seed=args.seed,
            )
    connector.save_plan(plan, args.plan)
    connected = connector.apply_plan(g, plan)
    simgraph.write_graph(connected, args.out)
    print(
        f"{args.strategy}: +{len(plan.new_edges)} edges, "
        f"{len(simgraph.connected_components(connected))} components -> {args.out}"
    )
    return 0


def _cmd_cluster(args) -> int:
    g = simgraph.read_graph(args.graph)
    if args.method == "louvain":
        result = cl.louvain(g, resolution=args.resolution, seed=args.seed)
    elif args.method == "markov":
        result = cl.markov(g, inflation=args.inflation)
    else:
        result = cl.spectral(g, k=args.spectral_k, seed=args.seed)
    cl.save_clustering(result, args.out)
    q = cl.modularity(g, result)
    print(f"{args.method}: {result.n_clusters} clusters, modularity {q:.4f} -> {args.out}")
    return 0


def _cmd_report(args) -> int:
    g = simgraph.read_graph(args.graph)
    clustering = cl.load_clustering(args.clustering)
    rep = report.rank_members(clustering, g, label=args.label)
    report.export_report(rep, args.out)
    s = rep.stats
    print(
        f"{s.n_clusters} clusters (max {s.max_size}), "
        f"{s.n_components} components, {s.n_edges} edges -> {args.out}"
    )
    return 0


def _cmd_run(args) -> int:
    try:
        manifest = pipeline.cmd_run(args.config, force=args.force)
    except pipeline.StageError as exc:
        print(f"pipeline failed at stage {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"label": manifest["label"],
                      "stages": sorted(manifest["stages"])}, sort_keys=True))
    return 0


def _cmd_sweep(args) -> int:
    if args.config:
        configs = [pipeline.load_config(p) for p in args.config]
    elif args.corpus:
        configs = pipeline.standard_grid(
            args.corpus,
            args.out or os.path.join(args.corpus, "runs"),
            n_centroids=args.n_centroids,
            spectral_k=args.spectral_k,
            seed=args.seed,
        )
    else:
        raise SystemExit("sweep needs --corpus (standard grid) or --config files")
    rows, failures = pipeline.cmd_sweep(
        configs, args.csv, n_sessions=args.sessions, eval_seed=args.seed,
        force=args.force,
    )
    for label, err in failures:
        print(f"FAILED {label}: {err}", file=sys.stderr)
    print(f"{len(rows)} rows -> {args.csv} ({len(failures)} failures)")
    return 1 if failures else 0


def _cmd_eval_sim(args) -> int:
    run_dir = args.run
    if args.judge == "reps":
        g = simgraph.dense_similarity_graph(np.load(os.path.join(run_dir, "reps.npy")))
    else:
        g = simgraph.read_graph(os.path.join(run_dir, "graph_connected.txt"))
    clustering = cl.load_clustering(os.path.join(run_dir, "clustering.json"))
    with open(os.path.join(run_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    groups = pipeline.load_control_groups(manifest["corpus"])
    sessions, answers = evaluation.run_simulated_sessions(
        clustering,
        g,
        manifest["label"],
        groups,
        kind=args.annotator,
        n_sessions=args.sessions,
        seed=args.seed,
    )
    eval_dir = os.path.join(run_dir, "eval")
    os.makedirs(eval_dir, exist_ok=True)
    evaluation.save_sessions(sessions, os.path.join(eval_dir, "sessions.json"))
    evaluation.append_answers(answers, os.path.join(eval_dir, "answers.jsonl"))
    rep = evaluation.score(sessions, answers)
    print(json.dumps({
        "config_label": rep.config_label,
        "n_sessions": rep.n_sessions,
        "n_scored": rep.n_scored,
        "accuracy": rep.accuracy,
        "sessions_discarded": rep.sessions_discarded,
        "disagreement": (
            evaluation.empirical_disagreement(rep) if rep.n_scored else None
        ),
    }, sort_keys=True))
    return 0


def _cmd_serve(args) -> int:
    serve(args.runs, host=args.host, port=args.port, ui_dir=args.ui)
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mm", description="motif mining pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a corpus directory")
    p.add_argument("--corpus", required=True)
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("phash", help="perceptual hashes for all corpus images")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_phash)

    p = sub.add_parser("index", help="train and fill an IVF-PQ index")
    p.add_argument("--descriptors", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-centroids", type=int, default=256)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--n-bits", type=int, default=8)
    p.add_argument("--opq", choices=["identity", "learned"], default="identity")
    p.add_argument("--kmeans-iters", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_index)

    p = sub.add_parser("graph", help="build the similarity graph")
    p.add_argument("--descriptors", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--nprobe", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_graph)

    p = sub.add_parser("connect", help="join graph components")
    p.add_argument("--graph", required=True)
    p.add_argument("--strategy", choices=["reg", "er", "best", "avg"], required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--representatives", help="global .mmdf or .npy vectors for best/avg")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--proportionality", type=float, default=1.0)
    p.add_argument("--k-pairs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_connect)

    p = sub.add_parser("cluster", help="cluster the graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--method", choices=["louvain", "markov", "spectral"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=float, default=1.0)
    p.add_argument("--inflation", type=float, default=2.0)
    p.add_argument("--spectral-k", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_cluster)

    p = sub.add_parser("report", help="rank members and export the motif report")
    p.add_argument("--graph", required=True)
    p.add_argument("--clustering", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="adhoc")
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("config")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="run a config grid and emit a CSV")
    p.add_argument("--corpus", help="corpus dir; builds the standard feature grid")
    p.add_argument("--out", help="output dir for runs (default <corpus>/runs)")
    p.add_argument("--config", nargs="*", help="explicit config files instead of a grid")
    p.add_argument("--csv", required=True)
    p.add_argument("--sessions", type=int, default=2)
    p.add_argument("--n-centroids", type=int, default=8)
    p.add_argument("--spectral-k", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("eval-sim", help="simulated annotator sessions on a run")
    p.add_argument("--run", required=True, help="run directory (out/<label>)")
    p.add_argument("--annotator", choices=["random", "similarity_oracle"],
                   default="similarity_oracle")
    p.add_argument("--judge", choices=["reps", "graph"], default="reps",
                   help="similarity source for the oracle: dense graph over "
                        "image representatives, or the run's query graph")
    p.add_argument("--sessions", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_eval_sim)

    p = sub.add_parser("serve", help="HTTP service over pipeline runs")
    p.add_argument("--runs", required=True, help="directory containing run dirs")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", help="static UI directory served at /ui/")
    p.set_defaults(fn=_cmd_serve)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
