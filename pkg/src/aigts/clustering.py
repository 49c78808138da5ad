"""Activity clustering of segment vectors.

Each segment becomes the distribution of app subcategories active within it.
K-means (k-means++ seeding, Lloyd updates) groups these vectors; the cluster
count is the silhouette maximiser over 2..20. Segments without any activity
are idle and never enter the fit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .kernels import silhouette_samples

IDLE_LABEL = -1
IDLE_NAME = "Device Idle"
PERSONALIZATION = "Personalization"
_DIST_TOL = 1e-12


@dataclass
class SegmentVector:
    user_id: str
    day: str
    seg_index: int
    v: np.ndarray
    duration: float
    idle: bool = False


@dataclass
class ActivityModel:
    k: int
    centroids: np.ndarray
    names: list
    seed: int
    channel_names: list = field(default_factory=list)
    silhouette_by_k: dict = field(default_factory=dict)
    inertia: float = 0.0
    labels: np.ndarray | None = None
    inertia_trace: list = field(default_factory=list)

    def name_of(self, label):
        return IDLE_NAME if label == IDLE_LABEL else self.names[label]

    def apply_names(self, mapping):
        """Override cluster names from ``{index: name}``."""
        for key, name in mapping.items():
            i = int(key)
            if not 0 <= i < self.k:
                raise ValueError(f"cluster index {i} out of range for k={self.k}")
            self.names[i] = str(name)

    def to_dict(self):
        return {
            "version": 1,
            "k": self.k,
            "seed": self.seed,
            "names": list(self.names),
            "channel_names": list(self.channel_names),
            "centroids": self.centroids.tolist(),
            "silhouette_by_k": {str(k): v for k, v in sorted(self.silhouette_by_k.items())},
            "inertia": self.inertia,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            k=int(d["k"]),
            centroids=np.asarray(d["centroids"], dtype=np.float64),
            names=list(d["names"]),
            seed=int(d["seed"]),
            channel_names=list(d.get("channel_names", [])),
            silhouette_by_k={int(k): float(v) for k, v in d.get("silhouette_by_k", {}).items()},
            inertia=float(d.get("inertia", 0.0)),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ActivitySpan:
    label: str
    start: float
    end: float

    @property
    def minutes(self):
        return (self.end - self.start) / 60.0


def segment_to_vector(X, segment, user_id="", day="", seg_index=0, bin_width=30.0):
    """Share of active channel-bins per channel within ``segment = (a, b)``."""
    a, b = segment
    if not 0 <= a < b <= len(X):
        raise ValueError(f"invalid segment {segment} for {len(X)} bins")
    counts = np.asarray(X[a:b], dtype=np.float64).sum(axis=0)
    tot = counts.sum()
    idle = tot == 0
    v = np.zeros_like(counts) if idle else counts / tot
    return SegmentVector(user_id, day, seg_index, v, (b - a) * bin_width / 60.0, bool(idle))


def _canonical_order(V):
    # fitting on a canonical row order makes results independent of input order
    return np.lexsort(V.T[::-1])


def _kmeanspp(V, k, rng):
    n = len(V)
    centers = np.empty((k, V.shape[1]))
    centers[0] = V[rng.integers(n)]
    d2 = ((V - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            i = int(rng.integers(n))
        else:
            i = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            i = min(i, n - 1)
        centers[c] = V[i]
        d2 = np.minimum(d2, ((V - centers[c]) ** 2).sum(axis=1))
    return centers


def _sq_dists(V, centers):
    return ((V[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _lloyd(V, centers, max_iter, tol):
    trace = []
    labels = np.zeros(len(V), dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists(V, centers)
        labels = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(len(V)), labels].sum()))
        new = centers.copy()
        counts = np.bincount(labels, minlength=len(centers))
        for c in range(len(centers)):
            if counts[c]:
                new[c] = V[labels == c].mean(axis=0)
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(d2[np.arange(len(V)), labels]))
            new[c] = V[far]
            labels[far] = c
            d2[far, :] = 0.0
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift < tol:
            break
    d2 = _sq_dists(V, centers)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(V)), labels].sum())
    trace.append(inertia)
    return centers, labels, inertia, trace


def _distinct_count(V):
    return len(np.unique(V, axis=0))


def kmeans_fit(vectors, k, seed=0, n_init=5, max_iter=300, tol=1e-8):
    """Best-of-``n_init`` k-means; deterministic given ``seed``."""
    V = np.asarray(vectors, dtype=np.float64)
    if V.ndim != 2 or len(V) == 0:
        raise ValueError("vectors must be a non-empty 2-D array")
    if k < 1 or k > _distinct_count(V):
        raise ValueError(f"k={k} exceeds the number of distinct vectors")
    order = _canonical_order(V)
    W = V[order]
    best = None
    for restart in range(n_init):
        rng = np.random.default_rng([seed, restart])
        result = _lloyd(W, _kmeanspp(W, k, rng), max_iter, tol)
        if best is None or result[2] < best[2]:
            best = result
    centers, labels_sorted, inertia, trace = best
    labels = np.empty_like(labels_sorted)
    labels[order] = labels_sorted
    return ActivityModel(
        k=k,
        centroids=centers,
        names=[f"cluster_{i}" for i in range(k)],
        seed=seed,
        inertia=inertia,
        labels=labels,
        inertia_trace=trace,
    )


def silhouette_score(vectors, labels, accel=None):
    labels = np.asarray(labels)
    uniq, dense = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least two clusters")
    return float(silhouette_samples(vectors, dense, accel).mean())


def choose_k(vectors, k_max=20, seed=0, n_init=5, accel=None):
    """Silhouette-maximising cluster count; returns ``(k, scores, models)``."""
    V = np.asarray(vectors, dtype=np.float64)
    if len(V) < 3:
        raise ValueError("choose_k needs at least 3 vectors")
    upper = min(k_max, len(V) - 1, _distinct_count(V))
    if upper < 2:
        raise ValueError("fewer than 2 distinct vectors")
    scores, models = {}, {}
    best_k, best_s = None, -np.inf
    for k in range(2, upper + 1):
        model = kmeans_fit(V, k, seed, n_init)
        s = silhouette_score(V, model.labels, accel)
        scores[k], models[k] = s, model
        if s > best_s:
            best_k, best_s = k, s
    return best_k, scores, models


def _personalization_centroid(model):
    if PERSONALIZATION not in model.channel_names:
        return None
    col = model.channel_names.index(PERSONALIZATION)
    for i, c in enumerate(model.centroids):
        if c.max() > 0 and int(np.argmax(c)) == col:
            return i
    return None


def assign_activity(vector, model, idle=None):
    """Nearest centroid (lowest index on ties).

    Zero vectors map to :data:`IDLE_LABEL` when some centroid is dominated by
    the Personalization channel.
    """
    v = np.asarray(getattr(vector, "v", vector), dtype=np.float64)
    if v.shape != (model.centroids.shape[1],):
        raise ValueError(f"vector has dimension {v.shape}, model expects {model.centroids.shape[1]}")
    if idle is None:
        idle = getattr(vector, "idle", not v.any())
    if idle and _personalization_centroid(model) is not None:
        return IDLE_LABEL
    d = np.sqrt(((model.centroids - v) ** 2).sum(axis=1))
    return int(np.argmax(d <= d.min() + _DIST_TOL))


def cluster_prototype(vectors, labels, k):
    """Mean member vector per cluster (zero row for an empty cluster)."""
    V = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels)
    out = np.zeros((k, V.shape[1]))
    for c in range(k):
        members = V[labels == c]
        if len(members):
            out[c] = members.mean(axis=0)
    return out


def adjusted_rand_index(a, b):
    """Adjusted Rand index between two labelings of the same items."""
    a = np.unique(np.asarray(a), return_inverse=True)[1]
    b = np.unique(np.asarray(b), return_inverse=True)[1]
    n = len(a)
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    sum_ij = sum(comb(int(x), 2) for x in table.ravel())
    sum_a = sum(comb(int(x), 2) for x in table.sum(axis=1))
    sum_b = sum(comb(int(x), 2) for x in table.sum(axis=0))
    total = comb(n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)


def fit_activity_model(segment_vectors, channel_names, k_max=20, seed=0, n_init=5, accel=None):
    """Choose k and fit on the non-idle segment vectors."""
    active = [sv for sv in segment_vectors if not sv.idle]
    V = np.array([sv.v for sv in active])
    k, scores, models = choose_k(V, k_max, seed, n_init, accel)
    model = models[k]
    model.silhouette_by_k = scores
    model.channel_names = list(channel_names)
    return model


def build_timeline(series, boundaries, model, vectors=None):
    """Activity spans for one segmented user-day, in time order."""
    spans = []
    for idx, seg in enumerate(boundaries.segments(series.n_bins)):
        sv = vectors[idx] if vectors is not None else segment_to_vector(series.X, seg, bin_width=series.bin_width)
        label = assign_activity(sv, model)
        spans.append(ActivitySpan(model.name_of(label), series.bin_start(seg[0]), series.bin_end(seg[1])))
    return spans
