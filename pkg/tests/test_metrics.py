import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ssgic.metrics import ExperimentReport, ReplicationRecord, aggregate, angle_statistic

TRUTH = (1, 2)
DIR = np.array([1.0, 1.0, 0.0, 0.0])


def rec(selected, inc=True, coefs=None):
    c = np.zeros(4) if coefs is None else np.asarray(coefs, float)
    if coefs is None:
        c[np.asarray(selected, int) - 1] = 1.0
    return ReplicationRecord(tuple(selected), inc, c, TRUTH, DIR)


def test_angle_examples():
    assert angle_statistic([1, 1, 0], [2, 2, 0]) == pytest.approx(0.0, abs=1e-7)
    assert angle_statistic([1, 0], [0, 1]) == pytest.approx(math.pi / 2)
    assert angle_statistic([1, 1], [0, 0]) == math.pi / 2
    assert angle_statistic([0, 0], [1, 0]) == math.pi / 2


def test_angle_length_mismatch():
    with pytest.raises(ValueError):
        angle_statistic([1, 1], [1, 1, 0])


vec = arrays(np.float64, 5, elements=st.floats(-100, 100))


@settings(max_examples=200, deadline=None)
@given(vec, vec, st.floats(0.01, 100), st.sampled_from([-1.0, 1.0]))
def test_angle_invariances(a, b, c, sign):
    v = angle_statistic(a, b)
    assert 0.0 <= v <= math.pi / 2
    assert angle_statistic(b, a) == pytest.approx(v, abs=1e-12)
    assert angle_statistic(a, sign * c * b) == pytest.approx(v, abs=1e-6)


def test_angle_tiny_and_huge_scales():
    a = np.ones(5)
    for scale in (1e-300, 1.3e-160, 1e150, 1e300):
        assert angle_statistic(a, -scale * a) == pytest.approx(0.0, abs=1e-6)
    assert angle_statistic(a, 5e-324 * np.eye(5)[0]) == pytest.approx(math.acos(1 / math.sqrt(5)), abs=1e-12)


def test_aggregate_single_equal():
    r = aggregate([rec(TRUTH)])
    assert r.p_equal == 1.0 and r.p_supset == 1.0 and r.l == 1


def test_aggregate_equal_and_superset():
    r = aggregate([rec((1, 2)), rec((1, 2, 4))])
    assert r.p_equal == 0.5 and r.p_supset == 1.0


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_counting_oracle():
    rng = np.random.default_rng(0)
    records, eq, sup, inc, angles = [], 0, 0, 0, []
    for _ in range(100):
        sel = tuple(sorted(rng.choice(4, size=rng.integers(0, 5), replace=False) + 1))
        flag = bool(rng.random() < 0.7) or sel == TRUTH
        coefs = np.zeros(4)
        coefs[np.asarray(sel, int) - 1] = rng.standard_normal(len(sel))
        records.append(ReplicationRecord(sel, flag, coefs, TRUTH, DIR))
        eq += sel == TRUTH
        sup += {1, 2} <= set(sel)
        inc += flag
        n = np.linalg.norm(coefs)
        angles.append(math.pi / 2 if n == 0 else math.acos(min(1.0, abs(coefs @ DIR) / (n * math.sqrt(2)))))
    r = aggregate(records)
    assert (r.p_equal, r.p_supset, r.p_inc) == (eq / 100, sup / 100, inc / 100)
    assert r.angle == pytest.approx(np.mean(angles), abs=1e-12)
    assert r.p_equal <= r.p_supset and r.p_equal <= r.p_inc
    assert 0 <= r.angle <= math.pi / 2


def test_standard_errors():
    r = aggregate([rec((1, 2)), rec((1,)), rec((1, 2)), rec((2, 3))])
    assert r.se("p_equal") == pytest.approx(math.sqrt(0.25 / 4))
    assert r.se("p_inc") == 0.0
    assert r.se("angle") >= 0.0


def test_record_round_trip():
    r = ReplicationRecord((1, 3), True, np.array([0.5, 0.0, -1.25, 0.0]), TRUTH, DIR, seed=4, failure="")
    back = ReplicationRecord.from_dict(r.to_dict())
    assert back.selected == r.selected and back.seed == 4
    np.testing.assert_array_equal(back.refit_coefficients, r.refit_coefficients)
