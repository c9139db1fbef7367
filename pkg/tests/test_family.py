import numpy as np
import pytest

from ssgic.data import DataError, standardize
from ssgic.family import NestedFamily, nested_from_order, order_support, union_families
from ssgic.loss import LossSpec
from ssgic.sim import SimModelSpec, generate
from ssgic.solver import PenalizedFit, PathResult, fit_path
from ssgic.theory import separation_holds


def _fit(coefs):
    return PenalizedFit(0.1, 0.0, np.asarray(coefs, dtype=float), 0.0, True, 0)


def test_order_support_by_magnitude():
    assert order_support(_fit([0, 3, -5, 0, 1])) == (3, 2, 5)


def test_order_support_empty():
    assert order_support(_fit([0, 0, 0])) == ()


def test_order_support_tie_break():
    c = np.zeros(8)
    c[1], c[6], c[3] = 1.5, -1.5, 2.0
    assert order_support(_fit(c)) == (4, 2, 7)


def test_nested_from_order():
    fam = nested_from_order((3, 2, 5))
    assert fam.models == ((), (3,), (2, 3), (2, 3, 5))
    assert fam.source == "single_lambda"
    assert nested_from_order(()).models == ((),)


@pytest.mark.parametrize("k", range(8))
def test_nested_family_size(k):
    order = tuple(np.random.default_rng(k).permutation(20)[:k] + 1)
    fam = nested_from_order(order)
    assert len(fam) == k + 1
    for a, b in zip(fam.models, fam.models[1:]):
        assert set(a) < set(b) and len(b) == len(a) + 1


def test_nested_from_order_rejects_duplicates():
    with pytest.raises(DataError):
        nested_from_order((1, 2, 1))


def test_union_of_two_fits():
    fam = union_families([_fit([1.0, 0.0]), _fit([2.0, 1.0])])
    assert fam.models == ((), (1,), (1, 2))
    assert fam.source == "union_over_path"


def test_union_deduplicates():
    one = union_families([_fit([0.0, 2.0, 1.0])])
    two = union_families([_fit([0.0, 2.0, 1.0]), _fit([0.0, 3.0, 1.5])])
    assert one.models == two.models


def test_union_order_is_size_then_lexicographic():
    fam = union_families([_fit([0, 0, 2, 1]), _fit([3, 0, 0, 0]), _fit([0, 2, 0, 0])])
    assert fam.models == ((), (1,), (2,), (3,), (3, 4))


@pytest.fixture(scope="module")
def m2_path():
    d = standardize(generate(SimModelSpec("m2", 500, 150, 0.0, 5))[0])
    return d, fit_path(d, LossSpec("logistic"), 20, 0.01)


def test_m2_union_family_properties(m2_path):
    d, path = m2_path
    fam = union_families(path)
    assert () in fam
    assert all(len(w) <= d.n for w in fam)
    assert len(fam) <= 1 + sum(len(f.support) for f in path.fits)
    prefixes = set()
    for f in path.fits:
        o = order_support(f)
        prefixes.update(tuple(sorted(o[:k])) for k in range(len(o) + 1))
    assert set(fam.models) <= prefixes


def test_separation_implies_truth_in_family(m2_path):
    d, path = m2_path
    checked = 0
    for f in path.fits:
        if {1, 2} <= set(f.support) and separation_holds(f.coefficients, (1, 2)):
            assert (1, 2) in nested_from_order(order_support(f))
            checked += 1
    assert checked > 0


def test_family_csv(tmp_path):
    fam = NestedFamily(((), (2,), (2, 5)))
    fam.to_csv(tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().splitlines() == ["size,indices", "0,", "1,2", "2,\"2,5\""]


def test_contains_is_order_free():
    fam = NestedFamily(((), (2, 5)))
    assert (5, 2) in fam and (2,) not in fam
