"""Metrics, seeded k-fold and nested cross-validation, and the general, group
and individual experiment pipelines with their CSV reports.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .regression import (
    MODEL_KINDS,
    ForestModel,
    default_grid,
    default_spec,
    fit_model,
    rf_importance,
)
from .stats import f_scores

TARGETS = ("valence", "arousal")
FEATURE_SETS = (("all", None), ("F>=5", 5.0), ("F>=10", 10.0))
EARLY_HOURS = (7, 10)
LATE_FROM = 15
MIN_INDIVIDUAL_ROWS = 50


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError("pred and truth differ in length")
    if pred.size == 0:
        raise ValueError("empty input")
    return pred, truth


def mae(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def rmse(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(math.sqrt(np.mean((pred - truth) ** 2)))


# -- folds -------------------------------------------------------------------


def kfold_split(n, k, seed):
    """Seeded shuffle of ``range(n)`` cut into ``k`` contiguous chunks."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(c) for c in np.array_split(perm, k)]


def group_kfold_split(groups, k, seed):
    """Like :func:`kfold_split` but whole groups stay together."""
    groups = np.asarray(groups)
    uniq = np.unique(groups)
    if k > len(uniq):
        raise ValueError(f"k={k} exceeds the number of groups ({len(uniq)})")
    chunks = kfold_split(len(uniq), k, seed)
    return [np.flatnonzero(np.isin(groups, uniq[c])) for c in chunks]


@dataclass
class CVPlan:
    outer_k: int = 5
    inner_k: int = 3
    trials: int = 3
    seed: int = 0
    group_by_user: bool = False

    @property
    def mode(self):
        return "user-grouped" if self.group_by_user else "row-random"

    def _split(self, n, k, seed, groups):
        if self.group_by_user and groups is not None:
            return group_kfold_split(groups, k, seed)
        return kfold_split(n, k, seed)

    def outer_folds(self, n, trial, groups=None):
        return self._split(n, self.outer_k, [self.seed, trial], groups)

    def inner_folds(self, train_rows, trial, fold, groups=None):
        """Folds over positions into ``train_rows`` (never outside it)."""
        g = None if groups is None else np.asarray(groups)[train_rows]
        return self._split(len(train_rows), self.inner_k, [self.seed, trial, fold], g)

    def assignments(self, n, groups=None):
        """Outer fold id per row, one array per trial."""
        out = []
        for t in range(self.trials):
            a = np.full(n, -1, dtype=np.int64)
            for f, rows in enumerate(self.outer_folds(n, t, groups)):
                a[rows] = f
            out.append(a)
        return out


GENERAL_PLAN = CVPlan(5, 3, 3)
GROUP_PLAN = CVPlan(3, 2, 1)


# -- pipeline ----------------------------------------------------------------


def select_columns(X, y, threshold):
    """F-selected column indices from the given (training) rows.

    An empty selection falls back to the single highest-F column so that a
    model can still be fitted.
    """
    if threshold is None:
        return list(range(X.shape[1]))
    F = f_scores(X, y)
    cols = [int(j) for j in np.flatnonzero(F >= threshold)]
    return cols or [int(np.argmax(F))]


def fit_pipeline(spec, X, y, threshold=None):
    """Feature selection and standardisation fitted on ``X``, then the model."""
    cols = select_columns(X, y, threshold)
    return fit_model(spec, X, y, cols)


def _spec_fits(spec, n_train):
    return spec.kind != "knn" or spec.params.get("k", 5) <= n_train


@dataclass
class FoldRecord:
    trial: int
    fold: int
    spec: object
    rmse: float
    mae: float
    n_train: int
    n_test: int
    columns: list
    importance: np.ndarray | None = None


@dataclass
class CVResult:
    rmse: float
    rmse_sd: float
    mae: float
    mae_sd: float
    folds: list = field(default_factory=list)
    notices: list = field(default_factory=list)

    def mean_importance(self):
        imps = [f.importance for f in self.folds if f.importance is not None]
        if not imps:
            return None
        return np.mean(imps, axis=0) if len(imps) > 1 else imps[0].copy()


def _sd(values):
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def _summarise(records, notices):
    r = [f.rmse for f in records]
    m = [f.mae for f in records]
    return CVResult(float(np.mean(r)), _sd(r), float(np.mean(m)), _sd(m), records, notices)


def _full_importance(model, d):
    if not isinstance(model.state, ForestModel):
        return None
    imp = np.zeros(d)
    imp[model.columns] = rf_importance(model.state)
    return imp


def _inner_search(grid, X, y, train, plan, trial, fold, threshold, groups, notices):
    scores = []
    inner = plan.inner_folds(train, trial, fold, groups)
    for spec in grid:
        errs = []
        for i, test_pos in enumerate(inner):
            tr = train[np.setdiff1d(np.arange(len(train)), test_pos)]
            te = train[test_pos]
            if not _spec_fits(spec, len(tr)):
                errs = None
                break
            model = fit_pipeline(spec, X[tr], y[tr], threshold)
            errs.append(rmse(model.predict(X[te]), y[te]))
        if errs is None:
            notices.append(f"{spec.label()} skipped: k exceeds inner training size")
            continue
        scores.append((float(np.mean(errs)), spec))
    if not scores:
        raise ValueError("no spec in the grid fits the inner training splits")
    best = scores[0]
    for s in scores[1:]:
        if s[0] < best[0]:
            best = s
    return best[1]


def nested_cv(X, y, grid, plan, threshold=None, groups=None):
    """Nested CV: inner grid search by RMSE, outer scoring of the refit winner.

    With a single-spec grid the inner loop is skipped, which is plain k-fold.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    grid = list(grid)
    if not grid:
        raise ValueError("empty spec grid")
    n, d = X.shape
    if n < plan.outer_k:
        raise ValueError(f"{n} rows is fewer than {plan.outer_k} outer folds")
    records, notices = [], []
    for t in range(plan.trials):
        for f, test in enumerate(plan.outer_folds(n, t, groups)):
            train = np.setdiff1d(np.arange(n), test)
            if len(grid) == 1:
                spec = grid[0]
            else:
                spec = _inner_search(grid, X, y, train, plan, t, f, threshold, groups, notices)
            model = fit_pipeline(spec, X[train], y[train], threshold)
            pred = model.predict(X[test])
            records.append(
                FoldRecord(
                    t,
                    f,
                    spec,
                    rmse(pred, y[test]),
                    mae(pred, y[test]),
                    len(train),
                    len(test),
                    list(model.columns),
                    _full_importance(model, d),
                )
            )
    return _summarise(records, sorted(set(notices)))


def plain_cv(X, y, spec, k, seed):
    """Non-nested k-fold evaluation of one fixed spec."""
    return nested_cv(X, y, [spec], CVPlan(k, 2, 1, seed))


# -- pipelines ---------------------------------------------------------------


@dataclass
class ReportRow:
    scope: str
    target: str
    feature_set: str
    n_features: int
    model: str
    rmse: float
    rmse_sd: float
    mae: float
    mae_sd: float
    n_rows: int
    chosen: str = ""


@dataclass
class Report:
    rows: list = field(default_factory=list)
    importance: dict = field(default_factory=dict)
    notices: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    cv_mode: str = "row-random"

    def cell(self, scope, target, feature_set, model):
        for r in self.rows:
            if (r.scope, r.target, r.feature_set, r.model) == (scope, target, feature_set, model):
                return r
        raise KeyError((scope, target, feature_set, model))


def _grids(models, grids, seed):
    grids = grids or {}
    return {m: grids.get(m) or default_grid(m, seed) for m in models}


def _chosen(result):
    """Chosen spec labels, most frequent first (ties alphabetical)."""
    counts = Counter(f.spec.label() for f in result.folds)
    return ";".join(sorted(counts, key=lambda k: (-counts[k], k)))


def _evaluate_scope(report, scope, fm, targets, feature_sets, models, grids, plan, n_min=None):
    groups = fm.user_ids if plan.group_by_user else None
    for target in targets:
        y = fm.target(target)
        for fs_name, thr in feature_sets:
            n_sel = len(select_columns(fm.X, y, thr)) if thr is not None else fm.X.shape[1]
            for m in models:
                res = nested_cv(fm.X, y, grids[m], plan, thr, groups)
                report.notices.extend(f"{scope}/{target}/{fs_name}/{m}: {n}" for n in res.notices)
                report.rows.append(
                    ReportRow(
                        scope, target, fs_name, n_sel, m, res.rmse, res.rmse_sd, res.mae, res.mae_sd, len(fm), _chosen(res)
                    )
                )
                if m == "rf" and thr is None:
                    report.importance[(scope, target)] = res.mean_importance()


def run_general(fm, targets=TARGETS, feature_sets=FEATURE_SETS, models=MODEL_KINDS, plan=None, grids=None):
    """Every model x target x feature set under nested CV (5 outer, 3 inner, 3 trials)."""
    plan = plan or GENERAL_PLAN
    report = Report(cv_mode=plan.mode)
    _evaluate_scope(report, "ALL", fm, targets, feature_sets, models, _grids(models, grids, plan.seed), plan)
    return report


def cohort_of(work_start, early=EARLY_HOURS, late_from=LATE_FROM):
    if work_start is None:
        return None
    if early[0] <= work_start <= early[1]:
        return "EARLY"
    if work_start >= late_from:
        return "LATE"
    return None


def cohort_rows(fm, metadata, early=EARLY_HOURS, late_from=LATE_FROM):
    """Row indices per cohort plus the list of excluded users."""
    rows = {"EARLY": [], "LATE": []}
    excluded = set()
    for i, u in enumerate(fm.user_ids):
        info = metadata.get(u)
        c = cohort_of(getattr(info, "work_start_hour", None), early, late_from)
        if c is None:
            excluded.add(u)
        else:
            rows[c].append(i)
    return {c: np.array(r, dtype=np.int64) for c, r in rows.items()}, sorted(excluded)


def run_groups(
    fm, metadata, targets=TARGETS, models=MODEL_KINDS, plan=None, grids=None, early=EARLY_HOURS, late_from=LATE_FROM
):
    """All-feature models per work-start cohort (3 outer, 2 inner folds)."""
    plan = plan or GROUP_PLAN
    report = Report(cv_mode=plan.mode)
    rows, excluded = cohort_rows(fm, metadata, early, late_from)
    if excluded:
        report.notices.append("excluded users (no cohort): " + ",".join(map(str, excluded)))
    grids = _grids(models, grids, plan.seed)
    for cohort in ("EARLY", "LATE"):
        idx = rows[cohort]
        if len(idx) < plan.outer_k:
            raise ValueError(f"cohort {cohort} has {len(idx)} rows, fewer than {plan.outer_k} folds")
        _evaluate_scope(report, cohort, fm.subset(idx), targets, (("all", None),), models, grids, plan)
    return report


def run_individual(fm, min_rows=MIN_INDIVIDUAL_ROWS, targets=TARGETS, models=MODEL_KINDS, k=5, seed=0):
    """Per-user 5-fold CV with fixed default specs; users need > ``min_rows`` rows."""
    report = Report(cv_mode="per-user")
    for u in sorted(set(fm.user_ids.tolist())):
        idx = np.flatnonzero(fm.user_ids == u)
        if len(idx) <= min_rows:
            report.skipped.append((u, len(idx)))
            continue
        sub = fm.subset(idx)
        for target in targets:
            y = sub.target(target)
            for m in models:
                res = plain_cv(sub.X, y, default_spec(m, seed), k, seed)
                report.rows.append(
                    ReportRow(u, target, "all", sub.X.shape[1], m, res.rmse, res.rmse_sd, res.mae, res.mae_sd, len(idx))
                )
    return report


@dataclass
class ImportanceRow:
    rank: int
    feature: str
    share: float


def importance_report(importances, feature_names, top_n=15):
    """Mean importance over fitted forests, ranked (ties by feature order)."""
    imps = [np.asarray(v, dtype=np.float64) for v in importances if v is not None]
    if not imps:
        return []
    mean = np.mean(imps, axis=0)
    total = mean.sum()
    mean = mean / total if total > 0 else np.full(len(mean), 1.0 / len(mean))
    order = sorted(range(len(mean)), key=lambda j: (-mean[j], j))
    return [ImportanceRow(r + 1, feature_names[j], float(mean[j])) for r, j in enumerate(order[:top_n])]


# -- writers -----------------------------------------------------------------

REPORT_FIELDS = ("scope", "target", "feature_set", "n_features", "model", "mae", "mae_sd", "rmse", "rmse_sd", "n_rows", "chosen", "cv_mode")


def _num(x):
    return repr(float(x))


def write_report(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in report.rows:
            w.writerow(
                [
                    r.scope,
                    r.target,
                    r.feature_set,
                    r.n_features,
                    r.model,
                    _num(r.mae),
                    _num(r.mae_sd),
                    _num(r.rmse),
                    _num(r.rmse_sd),
                    r.n_rows,
                    r.chosen,
                    report.cv_mode,
                ]
            )
        for u, n in report.skipped:
            w.writerow([u, "", "", "", "skipped", "", "", "", "", n, "too few rows", report.cv_mode])


def write_importance(tables, path):
    """``tables`` maps (scope, target) to a list of :class:`ImportanceRow`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scope", "target", "rank", "feature", "share"))
        for (scope, target), rows in tables.items():
            for r in rows:
                w.writerow([scope, target, r.rank, r.feature, _num(r.share)])
