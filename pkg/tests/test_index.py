"""Vector index: brute-force kNN oracle first, then quantizer behavior,
file round-trips, rotation learning, and query edge cases."""

import numpy as np
import pytest

from motifmine import index as ix
from motifmine.descriptors import KIND_GLOBAL, KIND_LOCAL, DescriptorSet

# -- oracle -----------------------------------------------------------------------


def oracle_knn(vectors, ids, ordinals, q, k):
    """Exact k nearest by non-squared L2, ties by (image_id, ordinal)."""
    d = np.sqrt(np.sum((vectors - q) ** 2, axis=1))
    order = sorted(range(len(d)), key=lambda t: (d[t], ids[t], ordinals[t]))
    return [(int(ids[t]), int(ordinals[t]), float(d[t])) for t in order[:k]]


def global_set(vectors):
    vectors = np.asarray(vectors, dtype=np.float32)
    return DescriptorSet(
        kind=KIND_GLOBAL, dim=vectors.shape[1], image_count=vectors.shape[0],
        ids=np.arange(vectors.shape[0], dtype=np.int64), vectors=vectors,
    )


def memorizing_index(vectors, seed=0):
    """1 coarse cell, one subquantizer per dimension, 256 codes: on <= 256
    distinct vectors the codebooks can store every value exactly."""
    config = ix.IndexConfig(
        n_centroids=1, m_subquantizers=vectors.shape[1], n_bits=8, seed=seed
    )
    idx = ix.train(vectors, config)
    ix.add(idx, global_set(vectors))
    return idx


def test_memorizing_config_reconstructs_exactly():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(256, 8))
    idx = memorizing_index(x)
    assert ix.reconstruction_error(idx, x) <= 1e-5


def test_memorizing_config_matches_bruteforce_ranks():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(256, 8))
    idx = memorizing_index(x)
    ids = np.arange(256)
    ordinals = np.zeros(256, dtype=np.int64)
    for t in range(20):
        q = rng.normal(size=8)
        hits = ix.query(idx, q, k=10, nprobe=1)
        expect = oracle_knn(x, ids, ordinals, q, 10)
        assert [(h.image_id, h.ordinal) for h in hits] == [(i, o) for i, o, _ in expect]
        np.testing.assert_allclose(
            [h.distance for h in hits], [d for _, _, d in expect], atol=1e-4
        )


def mixture(rng, n=2000, dim=32, k=8, bundle=10, spread=10.0):
    """Gaussian mixture with near-duplicate bundles: n/bundle scene centers
    drawn from k components, each emitting `bundle` points at tiny radius.
    Mirrors the near-duplicate structure the index exists to retrieve."""
    comp = rng.normal(scale=spread, size=(k, dim))
    scenes = comp[rng.integers(0, k, size=n // bundle)] + rng.normal(
        size=(n // bundle, dim)
    )
    return np.repeat(scenes, bundle, axis=0) + rng.normal(scale=0.02, size=(n, dim))


def test_recall_at_10_on_gaussian_mixture():
    rng = np.random.default_rng(2)
    x = mixture(rng)
    config = ix.IndexConfig(n_centroids=16, m_subquantizers=8, n_bits=8, seed=0)
    idx = ix.train(x, config)
    ix.add(idx, global_set(x))
    ids = np.arange(len(x))
    ordinals = np.zeros(len(x), dtype=np.int64)
    hits_total, n_queries = 0, 50
    for t in range(n_queries):
        q = x[rng.integers(0, len(x))] + rng.normal(scale=0.005, size=32)
        got = {h.image_id for h in ix.query(idx, q, k=10, nprobe=16)}
        true = {i for i, _, _ in oracle_knn(x, ids, ordinals, q, 10)}
        hits_total += len(got & true)
    recall = hits_total / (10 * n_queries)
    assert recall >= 0.9, f"recall@10 = {recall}"


def test_tie_break_orders_by_image_then_ordinal():
    # many images share the identical vector; distances tie exactly
    base = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [5.0, 5.0]])
    ids = np.array([2, 0, 1, 3], dtype=np.int64)
    dset = DescriptorSet(
        kind=KIND_LOCAL, dim=2, image_count=4,
        ids=np.repeat(ids, 2), vectors=np.repeat(base, 2, axis=0).astype(np.float32),
    )
    config = ix.IndexConfig(n_centroids=1, m_subquantizers=2, n_bits=2, seed=0)
    idx = ix.train(np.repeat(base, 2, axis=0), config)
    ix.add(idx, dset)
    hits = ix.query(idx, np.array([1.0, 0.0]), k=6, nprobe=1)
    assert [(h.image_id, h.ordinal) for h in hits] == [
        (0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1),
    ]


def test_query_validation_and_empty_cases():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(16, 4))
    idx = ix.train(x, ix.IndexConfig(n_centroids=2, m_subquantizers=2, n_bits=2))
    assert ix.query(idx, np.zeros(4), k=0) == []
    assert ix.query(idx, np.zeros(4), k=5) == []  # nothing added yet
    with pytest.raises(ValueError):
        ix.query(idx, np.zeros(5), k=1)
    with pytest.raises(ValueError):
        ix.query(idx, np.zeros(4), k=-1)
    with pytest.raises(ValueError):
        ix.query(idx, np.zeros(4), k=1, nprobe=3)
    with pytest.raises(ValueError):
        ix.add(idx, global_set(rng.normal(size=(4, 6))))


def test_train_validation():
    rng = np.random.default_rng(4)
    with pytest.raises(ValueError):
        ix.train(rng.normal(size=(10, 7)), ix.IndexConfig(m_subquantizers=2))
    with pytest.raises(ValueError):  # n < n_codes
        ix.train(rng.normal(size=(3, 4)), ix.IndexConfig(
            n_centroids=1, m_subquantizers=2, n_bits=4))
    with pytest.raises(ValueError):
        ix.IndexConfig(n_bits=17)
    with pytest.raises(ValueError):
        ix.IndexConfig(opq="bogus")


def test_train_is_deterministic():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(64, 8))
    config = ix.IndexConfig(n_centroids=4, m_subquantizers=4, n_bits=4, seed=9)
    a, b = ix.train(x, config), ix.train(x, config)
    np.testing.assert_array_equal(a.coarse_centroids, b.coarse_centroids)
    np.testing.assert_array_equal(a.codebooks, b.codebooks)
    np.testing.assert_array_equal(a.rotation, b.rotation)


# -- learned rotation ---------------------------------------------------------------


def correlated(rng, n=512, dim=16):
    mix = rng.normal(size=(dim, dim))
    return rng.normal(size=(n, dim)) * np.linspace(3, 0.2, dim) @ mix


def test_learned_rotation_is_orthonormal():
    rng = np.random.default_rng(6)
    x = correlated(rng)
    config = ix.IndexConfig(n_centroids=4, m_subquantizers=4, n_bits=6,
                            opq="learned", seed=0)
    idx = ix.train(x, config)
    np.testing.assert_allclose(
        idx.rotation @ idx.rotation.T, np.eye(16), atol=1e-5
    )


def test_learned_rotation_not_worse_than_identity():
    rng = np.random.default_rng(7)
    x = correlated(rng)
    base = ix.IndexConfig(n_centroids=4, m_subquantizers=4, n_bits=6, seed=0)
    learned = ix.IndexConfig(n_centroids=4, m_subquantizers=4, n_bits=6,
                             opq="learned", seed=0)
    err_id = ix.reconstruction_error(ix.train(x, base), x)
    err_ln = ix.reconstruction_error(ix.train(x, learned), x)
    assert err_ln <= err_id * 1.01


# -- persistence --------------------------------------------------------------------


def test_save_load_round_trip_bytes_and_queries(tmp_path):
    rng = np.random.default_rng(8)
    x = mixture(rng, n=300, dim=16, k=4)
    config = ix.IndexConfig(n_centroids=4, m_subquantizers=4, n_bits=5,
                            opq="learned", seed=1)
    idx = ix.train(x, config)
    ix.add(idx, global_set(x))
    p1, p2 = tmp_path / "a.mmix", tmp_path / "b.mmix"
    ix.save_index(idx, p1)
    back = ix.load_index(p1)
    ix.save_index(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    for t in range(10):
        q = rng.normal(scale=5.0, size=16)
        assert ix.query(idx, q, 7, nprobe=4) == ix.query(back, q, 7, nprobe=4)


def test_load_rejects_corrupt_files(tmp_path):
    p = tmp_path / "x.mmix"
    p.write_bytes(b"NOPE" + b"\0" * 64)
    with pytest.raises(ValueError):
        ix.load_index(p)
    rng = np.random.default_rng(9)
    x = rng.normal(size=(16, 4))
    idx = ix.train(x, ix.IndexConfig(n_centroids=2, m_subquantizers=2, n_bits=2))
    ix.save_index(idx, p)
    p.write_bytes(p.read_bytes() + b"\0")
    with pytest.raises(ValueError):
        ix.load_index(p)
