"""Regressors for affect scores: KNN, CART, random forest, gradient boosting
and constant baselines, plus train-split standardisation.

Every model is a deterministic function of (data, spec, seed).
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import bin_features, grow_tree, predict_tree
from .kernels import knn_predict as knn_kernel

MODEL_KINDS = ("mean", "median", "knn", "rf", "gb")
FORMAT = "aigts-model"
FORMAT_VERSION = 1


@dataclass
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")

    def label(self):
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({inner})"

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], dict(d.get("params", {})), int(d.get("seed", 0)))


def _grid(kind, seed, **axes):
    keys = list(axes)
    return [ModelSpec(kind, dict(zip(keys, vals)), seed) for vals in itertools.product(*axes.values())]


def default_grid(kind, seed=0):
    if kind in ("mean", "median"):
        return [ModelSpec(kind, {}, seed)]
    if kind == "knn":
        return _grid("knn", seed, k=[3, 5, 9, 15])
    if kind == "rf":
        return _grid(
            "rf", seed, n_trees=[100, 300], max_depth=[None, 8], max_features=["sqrt", "all"], min_leaf=[2]
        )
    if kind == "gb":
        return _grid(
            "gb", seed, n_trees=[100, 300], learning_rate=[0.05, 0.1], max_depth=[2, 3], min_leaf=[2]
        )
    raise ValueError(kind)


def default_spec(kind, seed=0):
    """Fixed spec used where no hyperparameter search runs."""
    return {
        "mean": ModelSpec("mean", {}, seed),
        "median": ModelSpec("median", {}, seed),
        "knn": ModelSpec("knn", {"k": 5}, seed),
        "rf": ModelSpec("rf", {"n_trees": 100, "max_depth": None, "max_features": "sqrt", "min_leaf": 2}, seed),
        "gb": ModelSpec("gb", {"n_trees": 100, "learning_rate": 0.1, "max_depth": 3, "min_leaf": 2}, seed),
    }[kind]


# -- standardisation ---------------------------------------------------------


@dataclass
class Scaler:
    mean: np.ndarray
    sd: np.ndarray
    constant: np.ndarray

    def to_dict(self):
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"]), np.asarray(d["sd"]), np.asarray(d["constant"], dtype=bool))


def standardize_fit(X_train):
    X = np.asarray(X_train, dtype=np.float64)
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    constant = ~(sd > 0)
    return Scaler(mean, sd, constant)


def standardize_apply(params, X):
    """Centre and scale; constant training columns pass through untouched."""
    X = np.asarray(X, dtype=np.float64)
    sd = np.where(params.constant, 1.0, params.sd)
    mean = np.where(params.constant, 0.0, params.mean)
    return (X - mean) / sd


# -- baselines ---------------------------------------------------------------


@dataclass
class ConstantModel:
    kind: str
    value: float

    def predict(self, X):
        return np.full(len(X), self.value)


def baseline_fit(y, kind="mean"):
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("cannot fit a baseline on an empty target")
    if kind == "mean":
        return ConstantModel("mean", float(y.mean()))
    if kind == "median":
        return ConstantModel("median", float(np.median(y)))
    raise ValueError(kind)


def baseline_predict(model, X):
    return model.predict(X)


# -- KNN ---------------------------------------------------------------------


@dataclass
class KNNModel:
    X: np.ndarray
    y: np.ndarray
    k: int

    def predict(self, Xq, accel=None):
        return knn_kernel(self.X, self.y, Xq, self.k, accel)


def knn_fit(X, y, k=5):
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= len(X):
        raise ValueError(f"k={k} must be within 1..{len(X)}")
    return KNNModel(X.copy(), np.asarray(y, dtype=np.float64).copy(), int(k))


def knn_predict(model, X):
    return model.predict(X)


# -- trees -------------------------------------------------------------------


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    def is_leaf(self):
        return self.left == -1

    def predict(self, X, accel=None):
        return predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value, accel)

    def importance(self, n_features):
        imp = np.zeros(n_features)
        internal = ~self.is_leaf()
        np.add.at(imp, self.feature[internal], self.gain[internal])
        return imp

    def to_nested(self, node=0):
        if self.left[node] == -1:
            return {"value": float(self.value[node]), "n": float(self.weight[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "gain": float(self.gain[node]),
            "n": float(self.weight[node]),
            "value": float(self.value[node]),
            "left": self.to_nested(int(self.left[node])),
            "right": self.to_nested(int(self.right[node])),
        }

    @classmethod
    def from_nested(cls, root):
        cols = {k: [] for k in ("feature", "threshold", "left", "right", "value", "weight", "gain")}

        def add(rec):
            i = len(cols["feature"])
            for k in cols:
                cols[k].append(-1 if k in ("feature", "left", "right") else 0.0)
            cols["value"][i] = rec["value"]
            cols["weight"][i] = rec.get("n", 0.0)
            if "left" in rec:
                cols["feature"][i] = rec["feature"]
                cols["threshold"][i] = rec["threshold"]
                cols["gain"][i] = rec.get("gain", 0.0)
                cols["left"][i] = add(rec["left"])
                cols["right"][i] = add(rec["right"])
            return i

        add(root)
        ints = ("feature", "left", "right")
        return cls(**{k: np.array(v, dtype=np.int64 if k in ints else np.float64) for k, v in cols.items()})


def resolve_max_features(rule, d):
    if rule is None or rule == "all":
        return d
    if rule == "sqrt":
        return max(1, int(math.sqrt(d)))
    if isinstance(rule, float) and 0 < rule <= 1:
        return max(1, int(rule * d))
    return max(1, min(int(rule), d))


def _tree_from(binned, y, w, max_depth, min_leaf, max_features, seed, accel):
    return Tree(*grow_tree(binned, y, w, max_depth, min_leaf, max_features, seed, accel))


def tree_fit(X, y, max_depth=None, min_leaf=2, max_features=None, seed=0, sample_weight=None, accel=None):
    """CART regression tree minimising weighted child squared error."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    mf = resolve_max_features(max_features, X.shape[1])
    return _tree_from(bin_features(X), y, w, max_depth, min_leaf, mf, seed, accel)


# -- random forest -----------------------------------------------------------


@dataclass
class ForestModel:
    trees: list
    n_features: int

    def predict(self, X, accel=None):
        X = np.asarray(X, dtype=np.float64)
        acc = np.zeros(len(X))
        for t in self.trees:
            acc += t.predict(X, accel)
        return acc / len(self.trees)


def rf_fit(
    X,
    y,
    n_trees=100,
    max_depth=None,
    max_features="sqrt",
    min_leaf=2,
    bootstrap=True,
    seed=0,
    accel=None,
):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    binned = bin_features(X)
    mf = resolve_max_features(max_features, d)
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(int(n_trees)):
        tree_seed = int(rng.integers(0, 2**63 - 1))
        if bootstrap:
            w = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        else:
            w = np.ones(n)
        trees.append(_tree_from(binned, y, w, max_depth, min_leaf, mf, tree_seed, accel))
    return ForestModel(trees, d)


def rf_predict(model, X, accel=None):
    return model.predict(X, accel)


def rf_importance(model):
    """Total impurity decrease per feature across the forest, normalised."""
    imp = np.zeros(model.n_features)
    for t in model.trees:
        imp += t.importance(model.n_features)
    total = imp.sum()
    if not total > 0:
        warnings.warn("forest has no informative splits; importance set uniform", stacklevel=2)
        return np.full(model.n_features, 1.0 / model.n_features)
    return imp / total


# -- gradient boosting -------------------------------------------------------


@dataclass
class BoostModel:
    init: float
    learning_rate: float
    trees: list
    train_mse: list = field(default_factory=list)

    def predict(self, X, accel=None):
        X = np.asarray(X, dtype=np.float64)
        out = np.full(len(X), self.init)
        for t in self.trees:
            out += self.learning_rate * t.predict(X, accel)
        return out


def gb_fit(X, y, n_trees=100, learning_rate=0.1, max_depth=3, min_leaf=2, seed=0, accel=None):
    """Least-squares boosting of depth-limited trees on residuals."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    binned = bin_features(X)
    w = np.ones(len(y))
    F = np.full(len(y), float(y.mean()))
    model = BoostModel(float(y.mean()), float(learning_rate), [], [float(np.mean((y - F) ** 2))])
    for m in range(int(n_trees)):
        tree = _tree_from(binned, y - F, w, max_depth, min_leaf, X.shape[1], seed + m, accel)
        F = F + learning_rate * tree.predict(X, accel)
        model.trees.append(tree)
        model.train_mse.append(float(np.mean((y - F) ** 2)))
    return model


def gb_predict(model, X, accel=None):
    return model.predict(X, accel)


# -- unified fit / predict ---------------------------------------------------


@dataclass
class FittedModel:
    spec: ModelSpec
    scaler: Scaler
    columns: list
    state: object

    @property
    def kind(self):
        return self.spec.kind

    def _prep(self, X):
        X = np.asarray(X, dtype=np.float64)
        return standardize_apply(self.scaler, X[:, self.columns])

    def predict(self, X):
        return self.state.predict(self._prep(X))


def fit_model(spec, X, y, columns=None, scaler=None):
    """Fit ``spec`` on the given columns of ``X`` (standardised on ``X``)."""
    X = np.asarray(X, dtype=np.float64)
    columns = list(range(X.shape[1])) if columns is None else [int(c) for c in columns]
    Xc = X[:, columns]
    scaler = standardize_fit(Xc) if scaler is None else scaler
    Z = standardize_apply(scaler, Xc)
    p = spec.params
    if spec.kind in ("mean", "median"):
        state = baseline_fit(y, spec.kind)
    elif spec.kind == "knn":
        state = knn_fit(Z, y, p.get("k", 5))
    elif spec.kind == "rf":
        state = rf_fit(
            Z,
            y,
            p.get("n_trees", 100),
            p.get("max_depth"),
            p.get("max_features", "sqrt"),
            p.get("min_leaf", 2),
            p.get("bootstrap", True),
            spec.seed,
        )
    else:
        state = gb_fit(
            Z,
            y,
            p.get("n_trees", 100),
            p.get("learning_rate", 0.1),
            p.get("max_depth", 3),
            p.get("min_leaf", 2),
            spec.seed,
        )
    return FittedModel(spec, scaler, columns, state)


def model_to_dict(model, feature_names=None):
    s = model.state
    if isinstance(s, ConstantModel):
        state = {"value": s.value}
    elif isinstance(s, KNNModel):
        state = {"k": s.k, "X": s.X.tolist(), "y": s.y.tolist()}
    elif isinstance(s, ForestModel):
        state = {"n_features": s.n_features, "trees": [t.to_nested() for t in s.trees]}
    elif isinstance(s, BoostModel):
        state = {
            "init": s.init,
            "learning_rate": s.learning_rate,
            "trees": [t.to_nested() for t in s.trees],
        }
    else:
        raise TypeError(type(s))
    doc = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "columns": list(model.columns),
        "scaler": model.scaler.to_dict(),
        "state": state,
    }
    if feature_names is not None:
        doc["feature_names"] = [feature_names[c] for c in model.columns]
    return doc


def model_from_dict(doc):
    if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
        raise ValueError("unsupported model document")
    spec = ModelSpec.from_dict(doc["spec"])
    st = doc["state"]
    if spec.kind in ("mean", "median"):
        state = ConstantModel(spec.kind, st["value"])
    elif spec.kind == "knn":
        state = KNNModel(np.asarray(st["X"], dtype=np.float64), np.asarray(st["y"], dtype=np.float64), st["k"])
    elif spec.kind == "rf":
        state = ForestModel([Tree.from_nested(t) for t in st["trees"]], st["n_features"])
    else:
        state = BoostModel(st["init"], st["learning_rate"], [Tree.from_nested(t) for t in st["trees"]])
    return FittedModel(spec, Scaler.from_dict(doc["scaler"]), list(doc["columns"]), state)
