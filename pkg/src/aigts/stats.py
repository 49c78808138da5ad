"""Rank correlation, Welch's t-test and univariate F scores."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np

F_CAP = 1e12
THRESHOLDS = (5.0, 10.0)
STRATA = ("All", "Male", "Female", "Age18-24", "Age25+")
DIMENSIONS = ("valence", "arousal", "productivity", "interruptions")


def rankdata(x):
    """Ranks starting at 1, ties get the average rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ValueError("correlation undefined for a constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(x, y):
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    if len(x) < 3:
        raise ValueError("spearman needs at least 3 pairs")
    return pearson(rankdata(x), rankdata(y))


# -- Student t tail via the regularised incomplete beta ----------------------


def _betacf(a, b, x, max_iter=500, eps=1e-16):
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc(a, b, x):
    """Regularised incomplete beta I_x(a, b) by continued fraction."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t, df):
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


@dataclass
class WelchResult:
    t: float
    df: float
    p: float


def welch_t(a, b):
    """Two-sided Welch's t-test."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least 2 values")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    if va == 0 and vb == 0:
        raise ValueError("both samples have zero variance")
    se2 = va + vb
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2**2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    p = 2.0 * t_sf(abs(t), df)
    return WelchResult(float(t), float(df), min(max(p, sys.float_info.min), 1.0))


# -- F scores ----------------------------------------------------------------


def f_statistic(x, y):
    """Univariate regression F = r^2 / (1 - r^2) * (n - 2), capped."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n < 3:
        raise ValueError("F statistic needs n >= 3")
    try:
        r = pearson(x, y)
    except ValueError:
        return 0.0
    r2 = r * r
    if r2 >= 1.0:
        return F_CAP
    return min(r2 / (1.0 - r2) * (n - 2), F_CAP)


def f_scores(X, y):
    X = np.asarray(X, dtype=np.float64)
    return np.array([f_statistic(X[:, j], y) for j in range(X.shape[1])])


@dataclass
class FeatureScore:
    name: str
    F: float
    selected_at_5: bool
    selected_at_10: bool


def score_features(X, y, names):
    return [FeatureScore(n, float(f), f >= 5.0, f >= 10.0) for n, f in zip(names, f_scores(X, y))]


def select_features(X, y, threshold):
    """Column indices with F >= ``threshold``."""
    return [int(j) for j in np.flatnonzero(f_scores(X, y) >= threshold)]


# -- correlation tables ------------------------------------------------------


@dataclass
class CorrelationEntry:
    stratum: str
    dimension: str
    variable: str
    rho: float
    n: int


@dataclass
class CorrelationReport:
    entries: list = field(default_factory=list)
    extremes: list = field(default_factory=list)
    notices: list = field(default_factory=list)


def strata_masks(user_ids, metadata):
    """Boolean row masks for the sex and age strata."""
    user_ids = np.asarray(user_ids, dtype=object)
    sex = np.array([str(getattr(metadata.get(u), "sex", "") or "").lower() for u in user_ids])
    age = np.array(
        [getattr(metadata.get(u), "age", None) if metadata.get(u) else None for u in user_ids],
        dtype=object,
    )
    age_f = np.array([np.nan if a is None else float(a) for a in age])
    return {
        "All": np.ones(len(user_ids), dtype=bool),
        "Male": np.isin(sex, ["m", "male"]),
        "Female": np.isin(sex, ["f", "female"]),
        "Age18-24": (age_f >= 18) & (age_f <= 24),
        "Age25+": age_f >= 25,
    }


def correlation_table(variables, labels, strata):
    """Spearman rho of every variable against every wellbeing dimension.

    ``variables`` and ``labels`` map names to equal-length arrays (NaN marks a
    missing label); ``strata`` maps stratum names to boolean row masks. A
    dimension with no labels at all is skipped with a notice, as is any
    stratum x dimension cell with fewer than 3 rows.
    """
    report = CorrelationReport()
    for dim, y in labels.items():
        y = np.asarray(y, dtype=np.float64)
        if not np.isfinite(y).any():
            report.notices.append(f"no {dim} labels; {dim} rows omitted")
            continue
        for stratum, mask in strata.items():
            rows = np.asarray(mask, dtype=bool) & np.isfinite(y)
            n = int(rows.sum())
            if n < 3:
                report.notices.append(f"{stratum}/{dim}: n={n} < 3, omitted")
                continue
            cell = []
            for name, x in variables.items():
                x = np.asarray(x, dtype=np.float64)[rows]
                try:
                    rho = spearman(x, y[rows])
                except ValueError:
                    continue
                cell.append(CorrelationEntry(stratum, dim, name, rho, n))
            report.entries.extend(cell)
            if cell:
                lo = min(cell, key=lambda e: (e.rho, e.variable))
                hi = min(cell, key=lambda e: (-e.rho, e.variable))
                report.extremes.append((stratum, dim, lo, hi))
    return report
