"""App-usage segmentation by weighted-entropy minimisation.

A user-day of app events becomes a binary matrix ``X`` (bins x subcategories).
A cut list splits the bins into consecutive segments; each segment's entropy
is the Shannon entropy (nats) of its channel-sum distribution and the cost of
a cut list is the length-weighted mean of segment entropies. Information gain
is the whole-day entropy minus that cost.

Three solvers share one tie-break (lexicographically smallest cut list among
cost-ties): exact dynamic programming, greedy top-down, and an exhaustive
brute force kept as a test oracle.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .catalog import UNCATEGORIZED
from .ingest import local_day
from .kernels import TIE_TOL, cost_matrix, dp_table, prefix_sums, reconstruct

BRUTEFORCE_LIMIT = 10**6


class EmptySeriesError(ValueError):
    """The requested user-day has no (categorised) app events."""


@dataclass
class BinnedSeries:
    user_id: str
    day: str
    bin_width: float
    X: np.ndarray
    channel_names: list
    t0: float
    t_end: float

    @property
    def n_bins(self):
        return self.X.shape[0]

    @property
    def active_minutes(self):
        return (self.t_end - self.t0) / 60.0

    def bin_start(self, b):
        return self.t0 + b * self.bin_width

    def bin_end(self, b):
        return min(self.t0 + b * self.bin_width, self.t_end)


@dataclass
class SegmentBoundaries:
    k: int
    cuts: list

    def segments(self, n_bins):
        edges = [0, *self.cuts, n_bins]
        return list(zip(edges[:-1], edges[1:]))


@dataclass
class IGCurve:
    values: np.ndarray
    solver: str


@dataclass
class KSelectionPlan:
    knee: dict = field(default_factory=dict)
    active_minutes: dict = field(default_factory=dict)
    user_rate: dict = field(default_factory=dict)
    median_rate: float = 0.0
    chosen_k: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    count_mode: str = "splits"


# -- binning -----------------------------------------------------------------


def check_bin_width(bin_width):
    bw = float(bin_width)
    if bw <= 0 or not (60.0 % bw == 0.0 or bw % 60.0 == 0.0):
        raise ValueError(f"bin width {bin_width} must divide 60 s or be a multiple of 60 s")
    return bw


def bin_app_events(events, catalog, bin_width, channels=None, user_id="", day=""):
    """Indicator matrix for ``events`` (all from one user-day)."""
    bw = check_bin_width(bin_width)
    channels = list(channels if channels is not None else catalog.subcategories)
    col = {c: i for i, c in enumerate(channels)}
    tagged = []
    for e in events:
        sub, _ = catalog.lookup(e.app_id)
        if sub == UNCATEGORIZED or sub not in col:
            continue
        tagged.append((e, col[sub]))
    if not tagged:
        raise EmptySeriesError(f"no app events for {user_id} {day}")

    t0 = min(e.timestamp for e, _ in tagged)
    t_end = max(e.end for e, _ in tagged)
    last_start = max(e.timestamp for e, _ in tagged)
    n_bins = max(math.ceil((t_end - t0) / bw), math.floor((last_start - t0) / bw) + 1, 1)
    X = np.zeros((n_bins, len(channels)), dtype=np.uint8)
    for e, c in tagged:
        b0 = math.floor((e.timestamp - t0) / bw)
        b1 = math.ceil((e.end - t0) / bw) - 1 if e.duration > 0 else b0
        X[b0 : max(b0, b1) + 1, c] = 1
    return BinnedSeries(user_id, day, bw, X, channels, t0, t_end)


def bin_events(log, user_id, day, bin_width, catalog, tz="UTC", channels=None):
    """Bin one user's app events for local calendar ``day`` (ISO string)."""
    day = str(day)
    events = [
        e
        for e in log.app_events
        if e.user_id == user_id and local_day(e.timestamp, tz).isoformat() == day
    ]
    return bin_app_events(events, catalog, bin_width, channels, user_id, day)


def user_days(log, tz="UTC"):
    """Group app events by ``(user_id, local day)`` in sorted key order."""
    groups = defaultdict(list)
    for e in log.app_events:
        groups[(e.user_id, local_day(e.timestamp, tz).isoformat())].append(e)
    return dict(sorted(groups.items()))


def bin_all(log, catalog, bin_width, tz="UTC"):
    """Binned series for every non-empty user-day; empty days are skipped."""
    out = []
    for (uid, day), events in user_days(log, tz).items():
        try:
            out.append(bin_app_events(events, catalog, bin_width, None, uid, day))
        except EmptySeriesError:
            continue
    return out


# -- reference objective -----------------------------------------------------


def segment_entropy(X, i, j):
    """Entropy (nats) of the channel-sum distribution of rows ``[i, j)``."""
    s = np.asarray(X[i:j], dtype=np.float64).sum(axis=0)
    tot = s.sum()
    if tot <= 0:
        return 0.0
    p = s[s > 0] / tot
    return float(-(p * np.log(p)).sum())


def _check_cuts(cuts, n):
    prev = 0
    for c in cuts:
        if not prev < c < n:
            raise ValueError(f"invalid cut list {list(cuts)} for {n} bins")
        prev = c


def weighted_cost(X, cuts):
    n = len(X)
    cuts = list(getattr(cuts, "cuts", cuts))
    _check_cuts(cuts, n)
    edges = [0, *cuts, n]
    return sum((b - a) / n * segment_entropy(X, a, b) for a, b in zip(edges[:-1], edges[1:]))


def information_gain(X, cuts):
    return segment_entropy(X, 0, len(X)) - weighted_cost(X, cuts)


# -- solvers -----------------------------------------------------------------


def _check_k(X, k):
    n = len(X)
    if not 0 <= k < n:
        raise ValueError(f"k={k} must satisfy 0 <= k < n_bins={n}")


def segment_dp(X, k, accel=None):
    """Globally optimal ``k`` cuts by dynamic programming over segment costs."""
    _check_k(X, k)
    if k == 0:
        return SegmentBoundaries(0, [])
    C = cost_matrix(X, accel)
    S = dp_table(C, k, accel)
    return SegmentBoundaries(k, reconstruct(C, S, k))


def _range_costs(P, starts, ends, n_total):
    s = P[ends] - P[starts]
    tot = s.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = s / tot[:, None]
        terms = np.where(s > 0, p * np.log(np.where(s > 0, p, 1.0)), 0.0)
    h = -terms.sum(axis=1)
    h[tot <= 0] = 0.0
    return (ends - starts) / n_total * h


def _topdown_path(X, k):
    """Greedy cut sets for 1..k; returns (list of cut lists, list of costs)."""
    n = len(X)
    P = prefix_sums(X)
    cuts = []
    seg_cost = {(0, n): float(_range_costs(P, np.array([0]), np.array([n]), n)[0])}
    history, costs = [[]], [seg_cost[(0, n)]]
    for _ in range(k):
        ts, deltas = [], []
        for (a, b), c_ab in sorted(seg_cost.items()):
            if b - a < 2:
                continue
            t = np.arange(a + 1, b)
            ts.append(t)
            deltas.append(
                _range_costs(P, np.full_like(t, a), t, n)
                + _range_costs(P, t, np.full_like(t, b), n)
                - c_ab
            )
        if not ts:
            break
        t, delta = np.concatenate(ts), np.concatenate(deltas)
        # candidates are in increasing t, so argmax picks the smallest tied index
        best_t = int(t[np.argmax(delta <= delta.min() + TIE_TOL)])
        a, b = next(seg for seg in seg_cost if seg[0] < best_t < seg[1])
        del seg_cost[(a, b)]
        for s0, s1 in ((a, best_t), (best_t, b)):
            seg_cost[(s0, s1)] = float(_range_costs(P, np.array([s0]), np.array([s1]), n)[0])
        cuts = sorted([*cuts, best_t])
        history.append(list(cuts))
        costs.append(sum(seg_cost[s] for s in sorted(seg_cost)))
    return history, costs


def segment_topdown(X, k):
    """``k`` rounds of greedily adding the cut that lowers cost the most."""
    _check_k(X, k)
    history, _ = _topdown_path(X, k)
    return SegmentBoundaries(k, history[k])


def segment_bruteforce(X, k):
    """Exhaustive search; the oracle for :func:`segment_dp`."""
    _check_k(X, k)
    n = len(X)
    if math.comb(n - 1, k) > BRUTEFORCE_LIMIT:
        raise ValueError(f"C({n - 1}, {k}) candidate cut lists exceeds {BRUTEFORCE_LIMIT}")
    cache = {}

    def seg(a, b):
        if (a, b) not in cache:
            cache[(a, b)] = (b - a) / n * segment_entropy(X, a, b)
        return cache[(a, b)]

    best, best_cuts = np.inf, []
    for cuts in itertools.combinations(range(1, n), k):
        edges = (0, *cuts, n)
        cost = sum(seg(a, b) for a, b in zip(edges[:-1], edges[1:]))
        if cost < best - TIE_TOL:
            best, best_cuts = cost, list(cuts)
    return SegmentBoundaries(k, best_cuts)


SOLVERS = {"dp": segment_dp, "topdown": segment_topdown, "bruteforce": segment_bruteforce}


def segment(X, k, solver="dp", accel=None):
    if solver == "dp":
        return segment_dp(X, k, accel)
    return SOLVERS[solver](X, k)


# -- k selection -------------------------------------------------------------


def ig_curve(X, k_max, solver="dp", accel=None):
    """Information gain for k = 0..k_max."""
    n = len(X)
    if not 0 <= k_max < n:
        raise ValueError(f"k_max={k_max} must satisfy 0 <= k_max < n_bins={n}")
    if solver == "dp":
        C = cost_matrix(X, accel)
        S = dp_table(C, k_max, accel)
        values = C[0, n] - S[:, 0]
    elif solver == "topdown":
        _, costs = _topdown_path(X, k_max)
        values = costs[0] - np.asarray(costs)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    values = np.asarray(values, dtype=np.float64)
    values[0] = 0.0
    return IGCurve(values, solver)


def knee_point(curve):
    """Index of the point lying furthest above the first-to-last chord.

    Returns 0 for curves shorter than 3, flat curves, and curves with no point
    above the chord. Ties resolve to the smallest k.
    """
    y = np.asarray(getattr(curve, "values", curve), dtype=np.float64)
    if len(y) < 3:
        return 0
    y0, y1 = y[0], y[-1]
    span = y1 - y0
    if not span > 0:
        return 0
    x = np.arange(len(y)) / (len(y) - 1)
    dist = (y - y0) / span - x
    dist[0] = dist[-1] = -np.inf
    best = float(dist.max())
    if best <= 1e-12:
        return 0
    return int(np.argmax(dist >= best - 1e-12))


def round_half_up(x):
    return int(math.floor(x + 0.5))


def plan_from_knees(knee, active_minutes, n_bins, count_mode="splits"):
    """Steps 2-4 of k selection given per-(user, day) knees.

    All three arguments are dicts keyed by ``(user_id, day)``.
    """
    if count_mode not in ("splits", "segments"):
        raise ValueError(f"unknown count_mode {count_mode!r}")
    plan = KSelectionPlan(count_mode=count_mode)
    offset = 1 if count_mode == "segments" else 0
    rates = defaultdict(list)
    for key in sorted(knee):
        plan.knee[key] = int(knee[key])
        plan.active_minutes[key] = float(active_minutes[key])
        if active_minutes[key] > 0:
            rates[key[0]].append((knee[key] + offset) / active_minutes[key])
    plan.user_rate = {u: float(np.mean(r)) for u, r in sorted(rates.items())}
    plan.median_rate = float(np.median(list(plan.user_rate.values()))) if plan.user_rate else 0.0
    for key in sorted(knee):
        k = round_half_up(plan.median_rate * active_minutes[key]) - offset
        plan.chosen_k[key] = int(min(max(k, 0), n_bins[key] - 1))
    return plan


def select_k_aigts(series, solver="dp", k_max=20, count_mode="splits", accel=None):
    """Per-day split budgets normalised to a common segments-per-minute rate.

    1. knee k* of each user-day's IG curve;
    2. per user, the mean over days of k* / active minutes;
    3. the median m of those per-user means;
    4. per user-day k = round(m * active minutes), clamped to [0, n_bins - 1].

    ``count_mode="segments"`` counts k* + 1 segments instead of k* splits.
    """
    if count_mode not in ("splits", "segments"):
        raise ValueError(f"unknown count_mode {count_mode!r}")
    series = [s for s in series if s.n_bins > 0]
    if not series:
        raise ValueError("no non-empty user-days")
    curves, knee, minutes, n_bins = {}, {}, {}, {}
    for s in series:
        key = (s.user_id, s.day)
        curve = ig_curve(s.X, min(k_max, s.n_bins - 1), solver, accel)
        curves[key] = curve
        knee[key] = knee_point(curve)
        minutes[key] = s.active_minutes
        n_bins[key] = s.n_bins
    plan = plan_from_knees(knee, minutes, n_bins, count_mode)
    plan.curves = curves
    return plan


def segment_rows(series, boundaries):
    """``segments.csv`` rows for one segmented user-day."""
    rows = []
    for idx, (a, b) in enumerate(boundaries.segments(series.n_bins)):
        rows.append(
            {
                "user_id": series.user_id,
                "day": series.day,
                "seg_index": idx,
                "start_bin": a,
                "end_bin": b,
                "start_ts": series.bin_start(a),
                "end_ts": series.bin_end(b),
            }
        )
    return rows
