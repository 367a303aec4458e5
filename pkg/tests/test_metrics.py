from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_precision_recall
from scenesearch.metrics import (
    MAX_BUDGET,
    EfficiencyCurve,
    SegFrame,
    auc_e,
    densify_rooms,
    efficiency_curve,
    label_sets,
    precision_recall,
    purity,
    seg_scores,
    spl,
    success_rate,
)

costs = st.lists(st.one_of(st.floats(0, 8000), st.just(math.inf)), min_size=1, max_size=30)


def test_auc_all_success_at_cost_one():
    curve = efficiency_curve([1.0] * 10)
    assert abs(auc_e(curve) - 1.0) <= 1 / MAX_BUDGET


def test_auc_all_fail_is_zero():
    assert auc_e(efficiency_curve([math.inf] * 4)) == 0.0


def test_auc_half_budget():
    assert auc_e(efficiency_curve([2500.0])) == 0.5


def test_curve_counts_cost_equal_to_budget():
    curve = efficiency_curve([3.0, 3.5, math.inf])
    assert curve(2) == 0 and curve(3) == pytest.approx(1 / 3) and curve(4) == pytest.approx(2 / 3)
    assert curve(-1) == 0.0 and curve(10**6) == pytest.approx(2 / 3)


def test_curve_rejects_bad_input():
    with pytest.raises(ValueError):
        efficiency_curve([])
    with pytest.raises(ValueError):
        efficiency_curve([-1.0])
    with pytest.raises(ValueError):
        EfficiencyCurve(np.arange(3), np.array([0.5, 0.2, 0.9]))


def test_curve_csv_round_trip():
    curve = efficiency_curve([10.0, 123.4, math.inf], max_budget=200)
    back = EfficiencyCurve.from_csv(curve.to_csv())
    assert np.array_equal(back.budgets, curve.budgets)
    assert np.array_equal(back.fraction, curve.fraction)
    with pytest.raises(ValueError):
        EfficiencyCurve.from_csv("b,f\n0,0\n")


def test_spl_examples():
    assert spl([(True, 10.0, 5.0), (False, 3.0, 3.0)]) == 0.25
    assert spl([(True, 0.0, 0.0)]) == 1.0
    # a shortest path shorter than the walk cannot exceed one
    assert spl([(True, 2.0, 4.0)]) == 1.0
    assert spl([(True, 4.0, math.inf)]) == 0.0
    with pytest.raises(ValueError):
        spl([(True, -1.0, 1.0)])


def test_success_rate():
    assert success_rate([True, False, True, True]) == 0.75
    with pytest.raises(ValueError):
        success_rate([])


@settings(max_examples=60, deadline=None)
@given(costs)
def test_curve_monotone_and_auc_below_success_rate(cs):
    curve = efficiency_curve(cs, max_budget=500)
    assert np.all(np.diff(curve.fraction) >= 0)
    sr = success_rate([math.isfinite(c) for c in cs])
    assert auc_e(curve) <= sr + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.floats(0, 100), st.floats(0, 100)), min_size=1, max_size=20))
def test_spl_never_exceeds_success_rate(rows):
    assert spl(rows) <= success_rate([r[0] for r in rows]) + 1e-12


cell_sets = st.lists(st.sets(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=20), max_size=5)


@settings(max_examples=80, deadline=None)
@given(cell_sets, cell_sets)
def test_precision_recall_matches_naive_and_swaps(pred, gt):
    p, r = precision_recall(pred, gt)
    np_, nr = naive_precision_recall(pred, gt)
    assert math.isclose(p, np_) and math.isclose(r, nr)
    assert precision_recall(gt, pred) == pytest.approx((r, p))
    assert 0 <= p <= 1 and 0 <= r <= 1


def test_precision_recall_identical_partition():
    rooms = [{(0, 0), (0, 1)}, {(5, 5)}]
    assert precision_recall(rooms, rooms) == (1.0, 1.0)
    assert precision_recall([], rooms) == (0.0, 0.0)


def test_precision_recall_merged_prediction():
    gt = [{(0, i) for i in range(3)}, {(1, i) for i in range(1)}]
    pred = [gt[0] | gt[1]]
    p, r = precision_recall(pred, gt)
    assert p == 0.75 and r == 1.0


def test_purity_examples():
    assert purity([[0, 0, 1], [1, 1]]) == 0.8
    assert purity([[2, -1, -1]]) == 1.0
    assert purity([]) == 0.0


def test_densify_rooms_splits_at_equal_distance():
    free = np.ones((1, 7), bool)
    label = densify_rooms(free, [[(0, 0)], [(0, 6)]])
    assert label.tolist() == [[0, 0, 0, 0, 1, 1, 1]]
    walled = free.copy()
    walled[0, 3] = False
    assert densify_rooms(walled, [[(0, 0)]]).tolist() == [[0, 0, 0, -1, -1, -1, -1]]


def test_label_sets_order():
    label = np.array([[1, -1], [0, 1]])
    assert label_sets(label) == [{(1, 0)}, {(0, 0), (1, 1)}]


def test_seg_scores_population_std():
    a = SegFrame([{(0, 0)}], [{(0, 0)}], [[0]])
    b = SegFrame([{(0, 0), (0, 1)}], [{(0, 0)}, {(0, 1)}], [[0, 1]])
    s = seg_scores([a, b])
    assert s.precision_mean == 0.75 and s.precision_std == 0.25
    assert s.recall_mean == 1.0 and s.purity == 0.75 and s.steps == 2
