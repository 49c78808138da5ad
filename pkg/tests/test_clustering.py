import numpy as np
import pytest
from conftest import planted_vectors
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score
from sklearn.metrics import silhouette_score as sk_silhouette

from aigts.clustering import (
    IDLE_LABEL,
    ActivityModel,
    SegmentVector,
    adjusted_rand_index,
    assign_activity,
    choose_k,
    cluster_prototype,
    fit_activity_model,
    kmeans_fit,
    segment_to_vector,
    silhouette_score,
)


def blobs(rng, centers, n=15, sd=0.05):
    centers = np.asarray(centers, dtype=float)
    V = np.concatenate([c + sd * rng.standard_normal((n, centers.shape[1])) for c in centers])
    return V, np.repeat(np.arange(len(centers)), n)


def test_segment_vector_examples():
    X = np.array([[1, 0, 0], [1, 0, 0], [1, 0, 0], [0, 1, 0]])
    assert segment_to_vector(X, (0, 3)).v.tolist() == [1.0, 0.0, 0.0]
    sv = segment_to_vector(X, (0, 4))
    assert sv.v.tolist() == [0.75, 0.25, 0.0] and not sv.idle
    idle = segment_to_vector(np.zeros((4, 3)), (0, 4), bin_width=30)
    assert idle.idle and not idle.v.any() and idle.duration == 2.0
    with pytest.raises(ValueError):
        segment_to_vector(X, (2, 2))


def test_kmeans_examples(rng):
    pts = np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
    V = np.repeat(pts, 4, axis=0)
    model = kmeans_fit(V, 3, seed=3)
    assert model.inertia == 0.0
    assert sorted(map(tuple, model.centroids)) == sorted(map(tuple, pts))
    A = np.array([1.0, 0.0]) + 0.01 * rng.standard_normal((10, 2))
    B = np.array([0.0, 1.0]) + 0.01 * rng.standard_normal((10, 2))
    m = kmeans_fit(np.vstack([A, B]), 2, seed=0)
    got = sorted(map(tuple, m.centroids))
    want = sorted(map(tuple, [A.mean(axis=0), B.mean(axis=0)]))
    assert np.allclose(got, want, atol=1e-6)
    m2 = kmeans_fit(np.vstack([A, B]), 2, seed=0)
    assert np.array_equal(m.centroids, m2.centroids) and np.array_equal(m.labels, m2.labels)
    with pytest.raises(ValueError):
        kmeans_fit(pts, 4)


def test_inertia_never_increases(rng):
    V = rng.random((80, 5))
    for seed in range(5):
        trace = kmeans_fit(V, 6, seed=seed, n_init=1).inertia_trace
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_silhouette_examples():
    V = np.array([[0, 0], [0.1, 0], [5, 0], [5.1, 0]])
    s = silhouette_score(V, [0, 0, 1, 1])
    assert s == pytest.approx(0.98, abs=0.005)
    assert silhouette_score(np.zeros((4, 2)), [0, 0, 1, 1]) == 0.0
    with pytest.raises(ValueError):
        silhouette_score(V, [0, 0, 0, 0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_silhouette_matches_sklearn(seed, k):
    rng = np.random.default_rng(seed)
    V = rng.random((30, 3))
    labels = np.arange(30) % k
    rng.shuffle(labels)
    assert silhouette_score(V, labels) == pytest.approx(sk_silhouette(V, labels), abs=1e-12)


def test_silhouette_singletons_score_zero():
    V = np.array([[0.0], [1.0], [1.2], [5.0]])
    labels = np.array([0, 1, 1, 2])
    assert silhouette_score(V, labels) == pytest.approx(sk_silhouette(V, labels), abs=1e-12)


def test_random_labels_score_below_true(rng):
    V, truth = blobs(rng, [[0, 0], [3, 0], [0, 3]])
    good = silhouette_score(V, truth)
    for seed in range(50):
        shuffled = np.random.default_rng(seed).permutation(truth)
        assert silhouette_score(V, shuffled) < good


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_ari_matches_sklearn(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 4, 25), rng.integers(0, 3, 25)
    assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)
    assert adjusted_rand_index(a, a) == 1.0


def test_choose_k_blobs(rng):
    V3, _ = blobs(rng, [[0, 0], [3, 0], [0, 3]])
    assert choose_k(V3, 8)[0] == 3
    V2, _ = blobs(rng, [[0, 0], [3, 3]])
    assert choose_k(V2, 8)[0] == 2
    assert choose_k(V3, 2)[0] == 2
    with pytest.raises(ValueError):
        choose_k(V3[:2])


@pytest.mark.parametrize("seed", range(3))
def test_planted_regimes_recovered(seed):
    V, truth = planted_vectors(seed)
    k, _, models = choose_k(V, 20, seed=seed)
    assert k == 3
    assert adjusted_rand_index(models[k].labels, truth) == 1.0


def test_permutation_invariance():
    V, _ = planted_vectors(7, n_per=10)
    k, _, models = choose_k(V, 10, seed=1)
    perm = np.random.default_rng(5).permutation(len(V))
    k2, _, models2 = choose_k(V[perm], 10, seed=1)
    assert k2 == k
    back = np.empty_like(models2[k].labels)
    back[perm] = models2[k].labels
    assert adjusted_rand_index(models[k].labels, back) == 1.0


def _model(centroids, channels=("a", "b", "Personalization")):
    c = np.asarray(centroids, dtype=float)
    return ActivityModel(len(c), c, [f"c{i}" for i in range(len(c))], 0, list(channels))


def test_assign_activity_examples():
    m = _model([[1, 0, 0], [0, 1, 0], [0.5, 0, 0.5], [0, 0, 1]])
    assert assign_activity(m.centroids[3], m) == 3
    assert assign_activity(np.array([0.5, 0.5, 0.0]), m) == 0
    assert assign_activity(np.zeros(3), m) == IDLE_LABEL
    no_pers = _model([[1, 0, 0], [0, 1, 0]])
    assert assign_activity(np.zeros(3), no_pers) == 0
    with pytest.raises(ValueError):
        assign_activity(np.zeros(2), m)


def test_prototypes():
    V = np.array([[1, 0, 0], [0.5, 0.5, 0], [0, 0.25, 0.75], [0, 1, 0]])
    labels = np.array([0, 0, 0, 1])
    proto = cluster_prototype(V, labels, 2)
    assert np.allclose(proto[0], [0.5, 0.25, 0.25])
    assert proto[1].tolist() == [0, 1, 0]
    assert np.allclose(proto.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(proto[0] >= V[:3].min(axis=0)) and np.all(proto[0] <= V[:3].max(axis=0))


def test_fit_skips_idle_and_round_trips(tmp_path):
    V, _ = planted_vectors(2, n_per=8)
    svs = [SegmentVector("u", "d", i, v, 1.0) for i, v in enumerate(V)]
    svs.append(SegmentVector("u", "d", 99, np.zeros(27), 1.0, idle=True))
    model = fit_activity_model(svs, [f"ch{i}" for i in range(27)], k_max=6)
    assert model.k == 3 and len(model.labels) == len(V)
    path = tmp_path / "m.json"
    model.save(path)
    back = ActivityModel.load(path)
    assert np.array_equal(back.centroids, model.centroids)
    assert back.silhouette_by_k == model.silhouette_by_k
    back.apply_names({"1": "Deep Work"})
    assert back.name_of(1) == "Deep Work" and back.name_of(IDLE_LABEL) == "Device Idle"
    with pytest.raises(ValueError):
        back.apply_names({"9": "x"})
