import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aigts.regression import (
    ModelSpec,
    baseline_fit,
    default_grid,
    default_spec,
    fit_model,
    gb_fit,
    knn_fit,
    knn_predict,
    model_from_dict,
    model_to_dict,
    resolve_max_features,
    rf_fit,
    rf_importance,
    standardize_apply,
    standardize_fit,
    tree_fit,
)


def data(seed, n=60, d=4):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = 2 * X[:, 0] - X[:, 1] + 0.3 * rng.standard_normal(n)
    return X, y


def test_standardize_examples():
    X = np.column_stack([np.arange(10.0), np.full(10, 7.0)])
    sc = standardize_fit(X)
    Z = standardize_apply(sc, X)
    assert sc.constant.tolist() == [False, True]
    assert np.array_equal(Z[:, 1], X[:, 1])
    assert abs(Z[:, 0].mean()) <= 1e-9 and abs(Z[:, 0].std() - 1) <= 1e-9
    # new rows go through the stored parameters only
    test = np.array([[100.0, 3.0]])
    before = standardize_fit(X)
    standardize_apply(sc, test)
    assert np.array_equal(sc.mean, before.mean) and np.array_equal(sc.sd, before.sd)


def test_baselines():
    assert baseline_fit([1, 2, 3]).value == 2.0 and baseline_fit([1, 2, 3], "median").value == 2.0
    assert baseline_fit([1, 1, 5]).value == pytest.approx(7 / 3) and baseline_fit([1, 1, 5], "median").value == 1.0
    assert baseline_fit([4]).value == 4.0 and baseline_fit([4], "median").value == 4.0
    with pytest.raises(ValueError):
        baseline_fit([])


def test_knn_examples():
    X, y = data(0)
    m1 = knn_fit(X, y, 1)
    assert np.array_equal(knn_predict(m1, X), y)
    m = knn_fit([[0.0], [10.0]], [1.0, 5.0], 2)
    assert knn_predict(m, np.array([[-3.0], [4.0], [99.0]])).tolist() == [3.0, 3.0, 3.0]
    full = knn_fit(X, y, len(X))
    Q = np.random.default_rng(1).standard_normal((25, X.shape[1]))
    assert np.max(np.abs(knn_predict(full, Q) - y.mean())) <= 1e-12
    with pytest.raises(ValueError):
        knn_fit(np.zeros((0, 2)), [], 1)
    with pytest.raises(ValueError):
        knn_fit(X, y, len(X) + 1)


def test_knn_tie_prefers_lower_index():
    m = knn_fit([[1.0], [-1.0], [3.0]], [10.0, 20.0, 30.0], 1)
    assert knn_predict(m, np.array([[0.0]])).tolist() == [10.0]


def test_tree_examples():
    y0 = np.full(8, 2.5)
    t = tree_fit(np.arange(8.0)[:, None], y0)
    assert t.n_nodes == 1 and t.value[0] == 2.5
    x = np.arange(1.0, 11.0)[:, None]
    y = np.where(x[:, 0] < 5, 1.0, 3.0)
    t = tree_fit(x, y, max_depth=1, min_leaf=1)
    assert t.n_nodes == 3 and 4 < t.threshold[0] < 5
    assert sorted(t.value[1:].tolist()) == [1.0, 3.0]
    X, yy = data(2)
    deep = tree_fit(X, yy, max_depth=None, min_leaf=1)
    assert np.max(np.abs(deep.predict(X) - yy)) == 0.0


def test_tree_threshold_matches_bruteforce():
    rng = np.random.default_rng(4)
    x = rng.integers(0, 20, 40).astype(float)
    y = rng.standard_normal(40)
    t = tree_fit(x[:, None], y, max_depth=1, min_leaf=1)
    vals = np.unique(x)
    best, best_thr = np.inf, None
    for thr in (vals[:-1] + vals[1:]) / 2:
        left, right = y[x <= thr], y[x > thr]
        sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
        if sse < best - 1e-12:
            best, best_thr = sse, thr
    assert t.threshold[0] == pytest.approx(best_thr)


def test_min_leaf_respected():
    X, y = data(5)
    t = tree_fit(X, y, max_depth=None, min_leaf=4)
    assert t.weight[t.is_leaf()].min() >= 4


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_duplicated_rows_same_splits(seed):
    X, y = data(seed, n=30, d=3)
    X = np.round(X, 1)
    a = tree_fit(X, y, max_depth=3, min_leaf=1)
    b = tree_fit(np.vstack([X, X]), np.concatenate([y, y]), max_depth=3, min_leaf=1)
    assert np.array_equal(a.feature, b.feature)
    assert np.array_equal(a.threshold, b.threshold)


def test_rf_single_tree_is_cart():
    X, y = data(6)
    rf = rf_fit(X, y, n_trees=1, max_depth=None, max_features="all", min_leaf=2, bootstrap=False, seed=3)
    t = tree_fit(X, y, max_depth=None, min_leaf=2, max_features=None)
    Q = np.random.default_rng(0).standard_normal((40, 4))
    assert np.array_equal(rf.predict(Q), t.predict(Q))
    assert np.array_equal(rf.trees[0].feature, t.feature)


def test_rf_importance_examples():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((80, 4))
    X[:, 3] = 1.0
    y = 3 * X[:, 0] + 0.1 * rng.standard_normal(80)
    rf = rf_fit(X, y, n_trees=20, seed=1)
    imp = rf_importance(rf)
    assert imp[3] == 0.0
    assert abs(imp.sum() - 1) <= 1e-9 and np.argmax(imp) == 0
    flat = rf_fit(X, np.ones(80), n_trees=3, seed=0)
    with pytest.warns(UserWarning):
        assert np.allclose(rf_importance(flat), 0.25)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_importance_permutation_equivariant(seed):
    # equal-gain splits resolve by column index, so keep nodes large enough that ties do not occur
    X, y = data(seed, n=200, d=5)
    perm = np.random.default_rng(seed).permutation(5)
    kw = dict(n_trees=5, max_depth=3, max_features="all", min_leaf=10, seed=seed)
    a = rf_importance(rf_fit(X, y, **kw))
    b = rf_importance(rf_fit(X[:, perm], y, **kw))
    assert np.allclose(b, a[perm], atol=1e-12)


def test_gb_examples():
    X, y = data(7)
    gb = gb_fit(X, y, n_trees=1, learning_rate=1.0, max_depth=None, min_leaf=1)
    assert np.max(np.abs(gb.predict(X) - y)) <= 1e-12
    flat = gb_fit(X, y, n_trees=5, learning_rate=0.0)
    assert np.all(flat.predict(X) == y.mean())
    gb = gb_fit(X, y, n_trees=40, learning_rate=0.1, max_depth=2)
    assert all(b <= a + 1e-12 for a, b in zip(gb.train_mse, gb.train_mse[1:]))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_ensembles_beat_mean_on_training_data(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.standard_normal((40, 3)), rng.standard_normal(40)
    base = np.mean((y - y.mean()) ** 2)
    for spec in (ModelSpec("rf", {"n_trees": 10}, seed), ModelSpec("gb", {"n_trees": 10}, seed)):
        m = fit_model(spec, X, y)
        assert np.mean((m.predict(X) - y) ** 2) <= base + 1e-12


def test_determinism_and_json_round_trip(tmp_path):
    X, y = data(8)
    Q = np.random.default_rng(2).standard_normal((10, 4))
    for kind in ("mean", "median", "knn", "rf", "gb"):
        spec = default_spec(kind, seed=4)
        if kind in ("rf", "gb"):
            spec.params["n_trees"] = 7
        a, b = fit_model(spec, X, y, columns=[0, 2, 3]), fit_model(spec, X, y, columns=[0, 2, 3])
        assert np.array_equal(a.predict(Q), b.predict(Q))
        path = tmp_path / f"{kind}.json"
        path.write_text(json.dumps(model_to_dict(a, ["a", "b", "c", "d"])))
        back = model_from_dict(json.loads(path.read_text()))
        assert np.array_equal(back.predict(Q), a.predict(Q))
        assert np.all(np.isfinite(a.predict(Q)))
    with pytest.raises(ValueError):
        model_from_dict({"format": "other"})


def test_grids_and_rules():
    assert [s.params["k"] for s in default_grid("knn")] == [3, 5, 9, 15]
    assert len(default_grid("rf")) == 8 and len(default_grid("gb")) == 8
    assert len(default_grid("mean")) == 1
    assert resolve_max_features("sqrt", 29) == 5 and resolve_max_features("all", 29) == 29
    assert resolve_max_features(None, 3) == 3
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ModelSpec("knn", {"k": 3}, 0).label()
