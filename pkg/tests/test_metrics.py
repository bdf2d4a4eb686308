import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from watergenius.metrics import (MetricError, Tolerance, derive_tolerance, percentage_error,
                                 tolerance_accuracy)

positive = st.floats(1.0, 1e5, allow_nan=False)


def test_percentage_error_examples():
    a = np.array([100.0, 250.0, 80.0])
    assert percentage_error(a, a) == 0.0
    assert percentage_error(np.full(4, 106.0), np.full(4, 100.0)) == pytest.approx(6.0, abs=1e-12)
    r = np.random.default_rng(0)
    p, t = r.uniform(50, 150, 5), r.uniform(50, 150, 5)
    by_hand = sum(100 * abs(pi - ti) / abs(ti) for pi, ti in zip(p, t)) / 5
    assert abs(percentage_error(p, t) - by_hand) <= 1e-12


def test_percentage_error_rejects_zero_and_mismatch():
    with pytest.raises(MetricError):
        percentage_error([1.0, 2.0], [1.0, 0.0])
    with pytest.raises(MetricError):
        percentage_error([1.0], [1.0, 2.0])
    with pytest.raises(MetricError):
        percentage_error([], [])


def test_tolerance_accuracy_examples():
    a = np.array([2700.0, 2100.0])
    assert tolerance_accuracy(a, a, Tolerance(500)) == 100.0
    assert tolerance_accuracy([3199.0], [2700.0], Tolerance(500)) == 100.0
    assert tolerance_accuracy([3201.0], [2700.0], Tolerance(500)) == 0.0
    assert tolerance_accuracy([3200.0], [2700.0], Tolerance(500)) == 100.0  # boundary counts
    p = np.array([10.0, 20.0, 30.0, 40.0])
    t = np.array([10.5, 20.5, 35.0, 45.0])
    assert tolerance_accuracy(p, t, 1.0) == 50.0


def test_tolerance_validation():
    with pytest.raises(MetricError):
        Tolerance(0.0)
    with pytest.raises(MetricError):
        Tolerance(5.0, "median")


def test_derive_tolerance_examples():
    assert derive_tolerance(np.full(10, 2700.0)).tau == pytest.approx(513.0, rel=1e-15)
    assert derive_tolerance(np.array([500.0, 1500.0]), 0.5).tau == 500.0
    t = derive_tolerance(np.full(3, 42.0))
    assert t.tau == pytest.approx(0.19 * 42.0) and t.rule == "fraction_of_mean"
    with pytest.raises(MetricError):
        derive_tolerance(np.array([]))
    with pytest.raises(MetricError):
        derive_tolerance(np.ones(3), 1.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(positive, positive), min_size=1, max_size=40), positive, positive)
def test_accuracy_monotone_in_tau(pairs, t1, t2):
    p, a = np.array(pairs).T
    lo, hi = sorted((t1, t2))
    assert tolerance_accuracy(p, a, lo) <= tolerance_accuracy(p, a, hi)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(positive, positive), min_size=1, max_size=40),
       st.floats(1e-3, 1e3))
def test_mape_scale_invariant(pairs, k):
    p, a = np.array(pairs).T
    base = percentage_error(p, a)
    assert percentage_error(k * p, k * a) == pytest.approx(base, rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(positive, positive), min_size=1, max_size=40), positive)
def test_accuracy_is_direct_count(pairs, tau):
    p, a = np.array(pairs).T
    count = sum(1 for pi, ai in pairs if abs(pi - ai) <= tau)
    assert tolerance_accuracy(p, a, tau) == 100.0 * count / len(pairs)
