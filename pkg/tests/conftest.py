"""Shared fixtures: one generated toy corpus and one completed pipeline run."""

import json
import os

import pytest

from motifmine import pipeline, toydata


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    toydata.generate_corpus(out, seed=0)
    return out


def make_config(corpus_dir, out_dir, feature=None, connection=None, cluster=None):
    blob = {
        "feature": feature or {"type": "phash", "name": "phash"},
        "index": {"n_centroids": 8, "m_subquantizers": 4, "n_bits": 4, "seed": 0},
        "graph": {"k": 50, "nprobe": 1, "seed": 0},
        "connection": connection or {"strategy": "er", "c": 1.0, "seed": 0},
        "cluster": cluster or {"method": "louvain", "resolution": 1.0, "seed": 0},
        "paths": {"corpus": str(corpus_dir), "out": str(out_dir)},
    }
    return pipeline.config_from_dict(blob)


@pytest.fixture(name="make_config", scope="session")
def make_config_fixture():
    return make_config


@pytest.fixture(scope="session")
def toy_run(toy_corpus, tmp_path_factory):
    """A completed phash-er-louvain run; yields (config, run_dir path)."""
    out = tmp_path_factory.mktemp("runs")
    config = make_config(toy_corpus, out)
    manifest = pipeline.cmd_run(config)
    run_dir = os.path.join(str(out), config.label())
    assert json.load(open(os.path.join(run_dir, "manifest.json")))["label"] == manifest["label"]
    return config, run_dir
