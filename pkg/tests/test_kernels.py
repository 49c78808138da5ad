"""The numba kernels and their numpy fallbacks must agree bit for bit."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aigts.kernels import (
    bin_features,
    cost_matrix,
    dp_table,
    grow_tree,
    knn_predict,
    predict_tree,
    reconstruct,
    silhouette_samples,
)
from aigts.segmentation import segment_dp


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 60), st.integers(1, 6))
def test_segment_kernels_agree(seed, n, c):
    rng = np.random.default_rng(seed)
    X = (rng.random((n, c)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
    Cn, Cp = cost_matrix(X, accel=True), cost_matrix(X, accel=False)
    assert np.allclose(Cn, Cp, atol=1e-13, rtol=0)
    k = min(5, n - 1)
    Sn, Sp = dp_table(Cn, k, accel=True), dp_table(Cn, k, accel=False)
    assert np.array_equal(Sn, Sp)
    for kk in range(1, k + 1):
        assert reconstruct(Cn, Sn, kk) == reconstruct(Cp, Sp, kk)
        assert segment_dp(X, kk, accel=True).cuts == segment_dp(X, kk, accel=False).cuts


def test_cost_matrix_accepts_counts():
    # non-binary input takes the direct-formula route
    X = np.array([[2.5, 0.0], [1.0, 3.0], [0.0, 0.5]])
    assert np.allclose(cost_matrix(X, accel=True), cost_matrix(X, accel=False), atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(5, 120), st.integers(1, 6), st.sampled_from([None, 1, 3]))
def test_tree_kernels_agree(seed, n, d, depth):
    rng = np.random.default_rng(seed)
    X = np.round(rng.standard_normal((n, d)), 1)
    y = rng.integers(1, 6, n).astype(float)
    w = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
    mf = int(rng.integers(1, d + 1))
    binned = bin_features(X)
    a = grow_tree(binned, y, w, depth, 2, mf, seed, accel=True)
    b = grow_tree(binned, y, w, depth, 2, mf, seed, accel=False)
    for x, z in zip(a, b):
        assert np.array_equal(x, z)
    Q = np.round(rng.standard_normal((30, d)), 1)
    assert np.array_equal(predict_tree(Q, *a[:5], accel=True), predict_tree(Q, *a[:5], accel=False))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(3, 80), st.integers(2, 6))
def test_silhouette_kernels_agree(seed, n, k):
    rng = np.random.default_rng(seed)
    V = rng.random((n, 4))
    labels = np.arange(n) % min(k, n)
    a = silhouette_samples(V, labels, accel=True)
    b = silhouette_samples(V, labels, accel=False)
    assert np.allclose(a, b, atol=1e-14, rtol=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 90), st.integers(1, 5))
def test_knn_kernels_agree(seed, n, d):
    rng = np.random.default_rng(seed)
    # small integer grid makes distance ties common
    Xtr = rng.integers(0, 3, (n, d)).astype(float)
    ytr = rng.standard_normal(n)
    Xq = rng.integers(0, 3, (25, d)).astype(float)
    k = int(rng.integers(1, n + 1))
    assert np.array_equal(knn_predict(Xtr, ytr, Xq, k, accel=True), knn_predict(Xtr, ytr, Xq, k, accel=False))


def test_env_var_selects_numpy_path():
    code = "from aigts._accel import NUMBA_ENABLED, use_numba; print(NUMBA_ENABLED, use_numba())"
    env = dict(os.environ, AIGTS_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "False"]
    env["AIGTS_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["True", "True"]


def test_bad_thread_cap():
    env = dict(os.environ, AIGTS_THREADS="0")
    out = subprocess.run([sys.executable, "-c", "import aigts._accel"], env=env, capture_output=True, text=True)
    assert out.returncode != 0 and "AIGTS_THREADS" in out.stderr


@pytest.mark.parametrize("accel", [True, False])
def test_three_regime_series_both_paths(accel):
    X = np.zeros((30, 3), dtype=np.uint8)
    for r in range(3):
        X[10 * r : 10 * (r + 1), r] = 1
    assert segment_dp(X, 2, accel=accel).cuts == [10, 20]
