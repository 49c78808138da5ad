"""Per-sample silhouette values (Euclidean), numba and chunked-numpy."""

import numpy as np

from .._accel import njit, use_numba


@njit
def _cluster_dist_sums_nb(V, labels, n_clusters):
    n, d = V.shape
    sums = np.zeros((n, n_clusters))
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for c in range(d):
                diff = V[i, c] - V[j, c]
                acc += diff * diff
            dist = np.sqrt(acc)
            sums[i, labels[j]] += dist
            sums[j, labels[i]] += dist
    return sums


def _cluster_dist_sums_np(V, labels, n_clusters, chunk=32):
    n = V.shape[0]
    onehot = np.zeros((n, n_clusters))
    onehot[np.arange(n), labels] = 1.0
    sums = np.empty((n, n_clusters))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        # explicit differences: the |a|^2 + |b|^2 - 2ab expansion leaves
        # ~1e-8 residue between identical points
        diff = V[lo:hi, None, :] - V[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        sums[lo:hi] = dist @ onehot
    return sums


def silhouette_samples(V, labels, accel=None):
    """Silhouette of each row; members of singleton clusters get 0."""
    V = np.ascontiguousarray(V, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_clusters = int(labels.max()) + 1
    if use_numba(accel):
        sums = _cluster_dist_sums_nb(V, labels, n_clusters)
    else:
        sums = _cluster_dist_sums_np(V, labels, n_clusters)
    counts = np.bincount(labels, minlength=n_clusters).astype(np.float64)
    rows = np.arange(len(labels))
    own = counts[labels]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = sums[rows, labels] / (own - 1.0)
        mean_other = sums / counts[None, :]
    mean_other[rows, labels] = np.inf
    mean_other[:, counts == 0] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    s[own <= 1] = 0.0
    return s
