"""Flat ``key = value`` run configuration.

Unknown keys are rejected so that typos surface immediately. Defaults are
the study's constants wherever one exists.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

from .regression import ModelSpec


def _floats(s):
    return tuple(float(x) for x in _items(s))


def _ints(s):
    return tuple(int(x) for x in _items(s))


def _items(s):
    return [x.strip() for x in str(s).split(",") if x.strip()]


def _depths(s):
    return tuple(None if x.lower() in ("none", "inf", "unlimited") else int(x) for x in _items(s))


def _features_rule(s):
    out = []
    for x in _items(s):
        out.append(x if x in ("sqrt", "all") else int(x))
    return tuple(out)


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_int(s):
    s = str(s).strip()
    return None if s in ("", "none") else int(s)


@dataclass
class RunConfig:
    input_dir: str = "data"
    out_dir: str = "out"
    catalog: str = ""
    activity_names: str = ""
    tz: str = "UTC"
    low_usage_threshold_s: float = 3600.0
    bin_width_s: float = 30.0
    seg_solver: str = "dp"
    seg_k_max: int = 20
    k_count_mode: str = "splits"
    cluster_k_max: int = 20
    cluster_n_init: int = 5
    window_minutes: float = 90.0
    corr_lookback_minutes: float = 60.0
    f_thresholds: tuple = (5.0, 10.0)
    targets: tuple = ("valence", "arousal")
    models: tuple = ("mean", "median", "knn", "rf", "gb")
    knn_k: tuple = (3, 5, 9, 15)
    rf_n_trees: tuple = (100, 300)
    rf_max_depth: tuple = (None, 8)
    rf_max_features: tuple = ("sqrt", "all")
    rf_min_leaf: int = 2
    gb_n_trees: tuple = (100, 300)
    gb_learning_rate: tuple = (0.05, 0.1)
    gb_max_depth: tuple = (2, 3)
    gb_min_leaf: int = 2
    general_outer_k: int = 5
    general_inner_k: int = 3
    general_trials: int = 3
    group_outer_k: int = 3
    group_inner_k: int = 2
    group_trials: int = 1
    individual_k: int = 5
    individual_min_rows: int = 50
    early_work_start: tuple = (7.0, 10.0)
    late_work_start_min: float = 15.0
    importance_top_general: int = 15
    importance_top_group: int = 5
    group_by_user: bool = False
    seed: int = 0
    synth_seed: int | None = None
    cluster_seed: int | None = None
    cv_seed: int | None = None
    model_seed: int | None = None
    synth_users: int = 25
    synth_days: int = 21
    synth_regimes: int = 3
    synth_disjoint: bool = False
    synth_noise: float = 0.05
    synth_label_sigma: float = 0.5
    base_dir: str = field(default=".", repr=False, compare=False)

    def named_seed(self, name):
        v = getattr(self, f"{name}_seed")
        return self.seed if v is None else v

    def path(self, p):
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(self.base_dir, p))

    def grid(self, kind):
        seed = self.named_seed("model")
        if kind in ("mean", "median"):
            return [ModelSpec(kind, {}, seed)]
        if kind == "knn":
            return [ModelSpec("knn", {"k": k}, seed) for k in self.knn_k]
        if kind == "rf":
            return [
                ModelSpec("rf", {"n_trees": t, "max_depth": d, "max_features": f, "min_leaf": self.rf_min_leaf}, seed)
                for t in self.rf_n_trees
                for d in self.rf_max_depth
                for f in self.rf_max_features
            ]
        if kind == "gb":
            return [
                ModelSpec("gb", {"n_trees": t, "learning_rate": lr, "max_depth": d, "min_leaf": self.gb_min_leaf}, seed)
                for t in self.gb_n_trees
                for lr in self.gb_learning_rate
                for d in self.gb_max_depth
            ]
        raise ValueError(kind)

    def grids(self):
        return {m: self.grid(m) for m in self.models}

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_PARSERS = {
    "f_thresholds": _floats,
    "targets": lambda s: tuple(_items(s)),
    "models": lambda s: tuple(_items(s)),
    "knn_k": _ints,
    "rf_n_trees": _ints,
    "rf_max_depth": _depths,
    "rf_max_features": _features_rule,
    "gb_n_trees": _ints,
    "gb_learning_rate": _floats,
    "gb_max_depth": _depths,
    "early_work_start": _floats,
}


def _parse_value(f, raw):
    if f.name in _PARSERS:
        return _PARSERS[f.name](raw)
    default = f.default
    if f.name.endswith("_seed"):
        return _opt_int(raw)
    if isinstance(default, bool):
        return _bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return str(raw).strip()


def parse_config_text(text, base_dir="."):
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string("[run]\n" + text)
    known = {f.name: f for f in fields(RunConfig) if f.name != "base_dir"}
    values = {}
    for key, raw in cp["run"].items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        try:
            values[key] = _parse_value(known[key], raw)
        except ValueError as exc:
            raise ValueError(f"bad value for {key}: {exc}") from None
    cfg = RunConfig(**values, base_dir=base_dir)
    validate(cfg)
    return cfg


def load_config(path):
    with open(path) as fh:
        text = fh.read()
    return parse_config_text(text, os.path.dirname(os.path.abspath(path)))


def validate(cfg):
    known_models = {"mean", "median", "knn", "rf", "gb"}
    if not set(cfg.models) <= known_models:
        raise ValueError(f"unknown model in {cfg.models}")
    if not set(cfg.targets) <= {"valence", "arousal"}:
        raise ValueError(f"unknown target in {cfg.targets}")
    if cfg.seg_solver not in ("dp", "topdown", "bruteforce"):
        raise ValueError(f"unknown solver {cfg.seg_solver!r}")
    if cfg.k_count_mode not in ("splits", "segments"):
        raise ValueError(f"unknown k_count_mode {cfg.k_count_mode!r}")
    if len(cfg.early_work_start) != 2:
        raise ValueError("early_work_start needs two hours: lo, hi")
    if cfg.cluster_k_max < 2 or cfg.seg_k_max < 1:
        raise ValueError("k caps too small")
    return cfg
