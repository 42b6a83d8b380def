"""Kernel correctness: both backends against brute-force oracles."""

import os
import subprocess
import sys

import numpy as np

from motifmine import kernels

# -- oracles (independent double-loop reimplementations) -----------------------


def oracle_adc(codes, lut):
    n, m = codes.shape
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        for j in range(m):
            out[i] += float(lut[j, codes[i, j]])
    return out


def oracle_nearest(points, centroids):
    labels = np.empty(len(points), dtype=np.int64)
    dists = np.empty(len(points), dtype=np.float64)
    for i, p in enumerate(points):
        d2 = [float(np.sum((p - c) ** 2)) for c in centroids]
        labels[i] = int(np.argmin(d2))
        dists[i] = min(d2)
    return labels, dists


# -- tests ----------------------------------------------------------------------


def test_adc_matches_oracle():
    rng = np.random.default_rng(0)
    lut = rng.random((8, 16)).astype(np.float32)
    codes = rng.integers(0, 16, size=(200, 8)).astype(np.uint8)
    got = kernels.accumulate_code_distances(codes, lut)
    assert got.dtype == np.float32
    assert got.shape == (200,)
    np.testing.assert_allclose(got, oracle_adc(codes, lut), rtol=1e-5)


def test_nearest_centroid_matches_oracle():
    rng = np.random.default_rng(1)
    points = rng.normal(size=(300, 12))
    centroids = rng.normal(size=(7, 12))
    labels, dists = kernels.nearest_centroid(points, centroids)
    exp_labels, exp_dists = oracle_nearest(points, centroids)
    np.testing.assert_array_equal(labels, exp_labels)
    np.testing.assert_allclose(dists, exp_dists, rtol=1e-10)


def test_nearest_centroid_tie_prefers_lowest_index():
    # point equidistant from both centroids
    centroids = np.array([[1.0, 0.0], [-1.0, 0.0]])
    labels, _ = kernels.nearest_centroid(np.array([[0.0, 5.0]]), centroids)
    assert labels[0] == 0


def test_numpy_fallback_matches_active_backend():
    rng = np.random.default_rng(2)
    lut = rng.random((4, 32)).astype(np.float32)
    codes = rng.integers(0, 32, size=(500, 4)).astype(np.uint8)
    # sequential j-order accumulation in f32 on both paths: bit identical
    np.testing.assert_array_equal(
        kernels.accumulate_code_distances(codes, lut),
        kernels._np_accumulate_code_distances(codes, lut),
    )
    points = rng.normal(size=(200, 8))
    cents = rng.normal(size=(5, 8))
    la, da = kernels.nearest_centroid(points, cents)
    lb, db = kernels._np_nearest_centroid(points, cents)
    np.testing.assert_array_equal(la, lb)
    np.testing.assert_allclose(da, db, rtol=1e-12)


def test_env_flag_forces_numpy_backend():
    prog = (
        "import numpy as np\n"
        "from motifmine import kernels\n"
        "rng = np.random.default_rng(3)\n"
        "lut = rng.random((4, 16)).astype(np.float32)\n"
        "codes = rng.integers(0, 16, size=(64, 4)).astype(np.uint8)\n"
        "out = kernels.accumulate_code_distances(codes, lut)\n"
        "print(kernels.BACKEND)\n"
        "print(out.tobytes().hex())\n"
    )

    def run(no_numba):
        env = dict(os.environ, MOTIFMINE_NO_NUMBA="1" if no_numba else "0")
        res = subprocess.run(
            [sys.executable, "-c", prog], capture_output=True, text=True, env=env
        )
        assert res.returncode == 0, res.stderr
        backend, payload = res.stdout.split()
        return backend, payload

    backend_off, payload_off = run(no_numba=True)
    assert backend_off == "numpy"
    backend_on, payload_on = run(no_numba=False)
    if kernels.NUMBA_AVAILABLE:
        assert backend_on == "numba"
    # identical bytes regardless of backend
    assert payload_on == payload_off
