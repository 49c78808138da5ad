import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aigts.ingest import AppEvent
from aigts.segmentation import (
    BinnedSeries,
    EmptySeriesError,
    bin_app_events,
    check_bin_width,
    ig_curve,
    information_gain,
    knee_point,
    plan_from_knees,
    segment_bruteforce,
    segment_dp,
    segment_entropy,
    segment_topdown,
    select_k_aigts,
    weighted_cost,
)
from aigts.synth import planted_series

FOUR = np.array([[1, 0], [1, 0], [0, 1], [0, 1]])


def three_regimes():
    X, cuts, _ = planted_series(10, [[0], [1], [2]], 3)
    return X, cuts


# -- entropy / cost / gain ---------------------------------------------------


def test_entropy_examples():
    assert segment_entropy(np.array([[1, 1], [1, 1]]), 0, 2) == pytest.approx(math.log(2), abs=1e-12)
    X = np.array([[1, 0], [1, 0], [1, 0], [0, 1]])
    assert segment_entropy(X, 0, 4) == pytest.approx(0.562335, abs=1e-6)
    assert segment_entropy(np.zeros((3, 2)), 0, 3) == 0.0


def test_cost_and_gain_examples():
    assert weighted_cost(FOUR, []) == pytest.approx(math.log(2))
    assert weighted_cost(FOUR, [2]) == 0.0
    assert weighted_cost(np.zeros((5, 3)), [1, 3]) == 0.0
    assert information_gain(FOUR, []) == 0.0
    assert information_gain(FOUR, [2]) == pytest.approx(math.log(2), abs=1e-12)
    h3 = -(1 / 3 * math.log(1 / 3) + 2 / 3 * math.log(2 / 3))
    ig1 = information_gain(FOUR, [1])
    assert ig1 == pytest.approx(math.log(2) - 0.75 * h3, abs=1e-12)
    assert round(ig1, 4) == 0.2158


def test_invalid_cuts_rejected():
    with pytest.raises(ValueError):
        weighted_cost(FOUR, [0])
    with pytest.raises(ValueError):
        weighted_cost(FOUR, [2, 2])


# -- binning -----------------------------------------------------------------


def test_ninety_second_event_spans_three_bins(catalog):
    sub, _ = catalog.lookup("Discord")
    series = bin_app_events([AppEvent("u", 1000.0, "Discord", 90.0)], catalog, 30)
    c = series.channel_names.index(sub)
    assert series.X[:, c].tolist() == [1, 1, 1]
    assert series.X.sum() == 3
    assert series.active_minutes == 1.5


def test_simultaneous_events_share_a_row(catalog):
    evs = [AppEvent("u", 0.0, "Discord", 20.0), AppEvent("u", 0.0, "Teams", 20.0)]
    series = bin_app_events(evs, catalog, 30)
    assert series.X.shape[0] == 1 and series.X[0].sum() == 2


def test_binning_errors(catalog):
    with pytest.raises(EmptySeriesError):
        bin_app_events([], catalog, 30)
    for bad in (0, -30, 45, 90):
        with pytest.raises(ValueError):
            check_bin_width(bad)
    assert check_bin_width(120) == 120.0


def test_scaling_durations_keeps_indicators(catalog):
    # longer use within the same bins leaves the binary matrix untouched
    a = bin_app_events([AppEvent("u", 0.0, "Teams", 10.0), AppEvent("u", 61.0, "Discord", 5.0)], catalog, 30)
    b = bin_app_events([AppEvent("u", 0.0, "Teams", 25.0), AppEvent("u", 61.0, "Discord", 25.0)], catalog, 30)
    assert np.array_equal(a.X, b.X)
    assert segment_dp(a.X, 1).cuts == segment_dp(b.X, 1).cuts


# -- solvers -----------------------------------------------------------------


def test_dp_examples():
    X, cuts = three_regimes()
    res = segment_dp(X, 2)
    assert res.cuts == [10, 20]
    assert information_gain(X, res) == pytest.approx(math.log(3), abs=1e-12)
    assert segment_dp(X, 0).cuts == []
    X2, c2, _ = planted_series([7, 5], [[0, 1], [2]], 3)
    assert segment_dp(X2, 1).cuts == c2 == [7]
    with pytest.raises(ValueError):
        segment_dp(X, 30)


def test_topdown_and_bruteforce_examples():
    X, _ = three_regimes()
    assert segment_topdown(X, 2).cuts == [10, 20]
    assert segment_topdown(FOUR, 1).cuts == segment_dp(FOUR, 1).cuts
    assert segment_bruteforce(X, 0).cuts == []
    assert segment_bruteforce(np.array([[1, 0], [0, 1]]), 1).cuts == [1]
    with pytest.raises(ValueError):
        segment_bruteforce(np.zeros((60, 2)), 5)


def test_ties_pick_smallest_cut():
    # all bins identical: every cut list has the same cost
    X = np.ones((6, 2))
    assert segment_dp(X, 2).cuts == [1, 2]
    assert segment_bruteforce(X, 2).cuts == [1, 2]
    assert segment_topdown(X, 2).cuts == [1, 2]


def test_ig_curve_examples():
    X, _ = three_regimes()
    curve = ig_curve(X, 5)
    assert curve.values[0] == 0.0
    assert np.allclose(curve.values[2:], math.log(3), atol=1e-12)
    assert ig_curve(X, 0).values.tolist() == [0.0]
    assert knee_point(curve) == 2
    with pytest.raises(ValueError):
        ig_curve(X, 30)


series_st = st.integers(2, 20).flatmap(
    lambda n: st.integers(1, 4).flatmap(lambda c: arrays(np.int8, (n, c), elements=st.integers(0, 1)))
)


@settings(max_examples=150, deadline=None)
@given(series_st, st.integers(0, 3))
def test_dp_equals_bruteforce(X, k):
    k = min(k, len(X) - 1)
    dp, bf = segment_dp(X, k), segment_bruteforce(X, k)
    assert dp.cuts == bf.cuts
    assert abs(weighted_cost(X, dp) - weighted_cost(X, bf)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(series_st)
def test_monotone_gain_and_dominance(X):
    k_max = min(5, len(X) - 1)
    ig = ig_curve(X, k_max).values
    assert np.all(np.diff(ig) >= -1e-12)
    for k in range(k_max + 1):
        assert weighted_cost(X, segment_topdown(X, k)) >= weighted_cost(X, segment_dp(X, k)) - 1e-12
        assert ig[k] == pytest.approx(information_gain(X, segment_dp(X, k)), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(series_st, st.data())
def test_gain_plus_cost_is_whole_entropy(X, data):
    n = len(X)
    cuts = sorted(data.draw(st.sets(st.integers(1, n - 1), max_size=min(3, n - 1)))) if n > 1 else []
    assert information_gain(X, cuts) + weighted_cost(X, cuts) == pytest.approx(segment_entropy(X, 0, n), abs=1e-12)


# -- k selection -------------------------------------------------------------


def test_knee_examples():
    assert knee_point([0, 0.60, 0.75, 0.80, 0.82, 0.83]) == 1
    assert knee_point([0, 0, 0, 0]) == 0
    assert knee_point([0, 1, 2, 3, 4]) == 0
    assert knee_point([0, 1]) == 0


def test_plan_examples():
    key = ("u", "d")
    plan = plan_from_knees({key: 12}, {key: 300.0}, {key: 1000})
    assert plan.median_rate == pytest.approx(0.04)
    assert plan.chosen_k[key] == 12
    # three users with rates 0.02, 0.04, 0.10; a 360-minute day then gets round(0.04 * 360)
    knee = {("a", "1"): 2, ("b", "1"): 4, ("c", "1"): 10, ("a", "2"): 0}
    mins = {("a", "1"): 50.0, ("b", "1"): 100.0, ("c", "1"): 100.0, ("a", "2"): 360.0}
    nb = dict.fromkeys(knee, 10_000)
    plan = plan_from_knees(knee, mins, nb)
    assert plan.user_rate["a"] == pytest.approx(0.02)
    assert plan.median_rate == pytest.approx(0.04)
    assert plan.chosen_k[("a", "2")] == 14
    plan = plan_from_knees({key: 18}, {key: 360.0}, {key: 1000})
    assert plan.median_rate == pytest.approx(0.05) and plan.chosen_k[key] == 18
    # clamping to n_bins - 1
    assert plan_from_knees({key: 18}, {key: 360.0}, {key: 5}).chosen_k[key] == 4
    seg = plan_from_knees({key: 11}, {key: 300.0}, {key: 1000}, count_mode="segments")
    assert seg.median_rate == pytest.approx(0.04) and seg.chosen_k[key] == 11


def test_select_k_end_to_end():
    X, _ = three_regimes()
    series = [BinnedSeries("u", "d", 60.0, X, ["a", "b", "c"], 0.0, 60.0 * len(X))]
    plan = select_k_aigts(series, k_max=6)
    assert plan.knee[("u", "d")] == 2
    assert plan.chosen_k[("u", "d")] == 2
    assert plan.median_rate > 0
    with pytest.raises(ValueError):
        select_k_aigts([])
