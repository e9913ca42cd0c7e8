import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from opbw.paths import LatticePath
from opbw.scaling import ScaledPath
from opbw.statistics import (FailureBudgetExceeded, PathSet, combined_se, density_gamma,
                             density_gamma_scan, density_right_edge,
                             disjoint_occurrence_check, eta, eta_hat, negcor_check, r00_sizes)

from oracles import right_edge_pair_apart_n2


def test_pathset_operators():
    K = PathSet([LatticePath(0, [0, 1, 2]), LatticePath(1, [3, 2]), LatticePath(2, [5])])
    assert len(K.starting_at(1)) == 1
    assert len(K.started_by(1)) == 2
    assert K.positions(1) == {1.0, 3.0}
    assert K.positions(2) == {2.0, 5.0}
    cut = K.restricted(1)
    assert [q.start_time for q in cut] == [1, 1, 2]
    assert cut.paths[0] == LatticePath(1, [1, 2])


def test_eta_examples():
    assert eta(PathSet(), 0, 1, 0, 1) == 0
    merged = PathSet([LatticePath(0, [0, 1, 2, 3]), LatticePath(0, [2, 1, 2, 3])])
    assert eta(merged, 0, 3, 0, 2) == 1
    a, b = 0, 4
    three = PathSet([LatticePath(0, [a - 2, a - 1]), LatticePath(0, [a, a + 1]),
                     LatticePath(0, [b, b + 1])])
    assert eta(three, 0, 1, a, b) == 2


def test_eta_hat_examples():
    assert eta_hat(PathSet(), 0, 1, 0, 1) == 0
    mid = PathSet([ScaledPath([0.0, 1.0], [0.0, 0.5])])
    assert eta_hat(mid, 0, 1, 0, 1) == 1
    edge = PathSet([ScaledPath([0.0, 1.0], [0.3, 0.0])])
    assert eta_hat(edge, 0, 1, 0, 1) == 0


def test_counters_reject_bad_windows():
    with pytest.raises(ValueError):
        eta(PathSet(), 0, 0, 0, 1)
    with pytest.raises(ValueError):
        eta_hat(PathSet(), 0, 1, 1, 1)


walk_sets = st.lists(st.lists(st.sampled_from([-1, 1]), min_size=4, max_size=4),
                     min_size=1, max_size=8)


def _family(walks, offsets):
    return PathSet(LatticePath(0, np.r_[2 * o, 2 * o + np.cumsum(w)])
                   for w, o in zip(walks, offsets))


@given(walk_sets, st.lists(st.integers(-5, 5), min_size=8, max_size=8),
       st.integers(-8, 8), st.integers(1, 8), st.integers(0, 4), st.integers(0, 4))
def test_eta_hat_monotone_and_additive(walks, offsets, a, w, da, db):
    K = _family(walks, offsets)
    b = a + w
    inner = eta_hat(K, 0, 4, a, b)
    assert inner <= eta_hat(K, 0, 4, a - da, b + db)
    c = a + (w // 2 if w > 1 else 1)
    if a < c < b:
        at_c = 1 if c in K.positions(4) else 0
        assert eta_hat(K, 0, 4, a, c) + eta_hat(K, 0, 4, c, b) + at_c == inner


@given(walk_sets, st.lists(st.integers(-5, 5), min_size=8, max_size=8),
       st.integers(-8, 8), st.integers(1, 8))
def test_eta_dominates_nested_dual_count(walks, offsets, a, w):
    K = _family(walks, offsets)
    b = a + w
    through = PathSet(q for q in K if a <= q(0) <= b)
    assert eta(K, 0, 4, a, b) >= eta_hat(through, 0, 4, -100, 100)


def test_density_validation():
    with pytest.raises(ValueError):
        density_gamma(0.8, 3, 10, 0)
    with pytest.raises(ValueError):
        density_right_edge(0.0, 4, 10, 0)
    with pytest.raises(ValueError):
        negcor_check(0.0, 4, 0, 2, 10, 0)
    with pytest.raises(ValueError):
        negcor_check(0.8, 4, 1, 3, 10, 0)


def test_p1_values():
    assert density_gamma(1.0, 64, 20, 1).p_hat == 1.0
    assert density_right_edge(1.0, 64, 20, 1).p_hat == 1.0
    nc = negcor_check(1.0, 16, 0, 8, 20, 1)
    assert nc.lhs == nc.rhs == 1.0 and nc.passed
    sizes, apart, _ = r00_sizes(1.0, 64, 10, 1)
    assert np.all(sizes == 8) and np.all(apart)
    d = disjoint_occurrence_check(1.0, 64, 4, 10, 1)
    assert d.lhs == d.rhs == 1.0


def test_disjoint_k0():
    d = disjoint_occurrence_check(0.8, 64, 0, 200, 1)
    assert d.lhs == d.rhs == 1.0 and d.passed


def test_disjoint_k1_is_an_identity():
    d = disjoint_occurrence_check(0.8, 64, 1, 500, 2)
    assert d.lhs == d.rhs


@pytest.mark.parametrize("p, frac", [(0.8, Fraction(4, 5)), (0.3, Fraction(3, 10))])
def test_pair_density_n2_matches_enumeration(p, frac):
    exact = float(right_edge_pair_apart_n2(frac))
    g = density_gamma(p, 2, 20_000, 3, horizon=2, window=200)
    r = density_right_edge(p, 2, 20_000, 4, window=200)
    assert abs(g.p_hat - exact) < 3 * g.se
    assert abs(r.p_hat - exact) < 3 * r.se


def test_multi_pair_estimator_agrees_with_single_pair():
    one = density_gamma(0.8, 64, 20_000, 5)
    many = density_gamma(0.8, 64, 2_000, 6, pairs=16)
    assert abs(one.p_hat - many.p_hat) < 3 * combined_se(one.se, many.se)


def test_translation_invariance_scan_vs_pair():
    pair = density_gamma(0.8, 64, 2_000, 7, pairs=16)
    scan = density_gamma_scan(0.8, 64, 400, 8, width=64)
    assert abs(pair.p_hat - scan.p_hat) < 3 * combined_se(pair.se, scan.se)


def test_gamma_below_right_edge_density():
    g = density_gamma(0.8, 64, 2_000, 9, pairs=16)
    r = density_right_edge(0.8, 64, 2_000, 10, pairs=16)
    assert g.p_hat <= r.p_hat + 3 * combined_se(g.se, r.se)


def test_r00_size_has_no_upward_trend():
    means = []
    for k, n in enumerate((64, 256, 1024)):
        sizes, _, _ = r00_sizes(0.8, n, 2_000, 20 + k)
        means.append((sizes.mean(), sizes.std(ddof=1) / math.sqrt(len(sizes))))
    for (m0, s0), (m1, s1) in zip(means, means[1:]):
        assert m1 - m0 <= 3 * math.hypot(s0, s1)


def test_failure_budget():
    with pytest.raises(FailureBudgetExceeded):
        density_gamma(0.4, 64, 200, 1, window=1)
