import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperperc.errors import RejectedInputError
from hyperperc.geometry import tree_dist
from hyperperc.groups import build_ball
from hyperperc.magic import (AntiHalfspace, halfspace_residual, halfspace_residuals, is_anti_member,
                             magic_classify, occupancy, separated_subset, single_halfspace_failure,
                             supporting_hyperplane)
from hyperperc.sets import parse_set


def test_anti_halfspace_example():
    x, y = (1,) * 10, ()
    assert is_anti_member(x, y, (1,) * 10 + (2,) * 7, 1)
    assert not is_anti_member(x, y, (1,) * 10 + (2,) * 6, 1)  # only 6 = 6D away
    assert not is_anti_member(x, y, (2,) * 20, 1)  # wrong side of x
    h = AntiHalfspace(x, y, 1)
    t1, t = h.witness((1,) * 10 + (2,) * 7)
    assert (t1, t) == (10, 17)


def test_anti_halfspace_ball_agrees_with_pointwise():
    b = build_ball("free:2", 7)
    h = AntiHalfspace((1,), (), 1)
    idx = set(h.members(b).tolist())
    assert idx == {i for i, w in enumerate(b.words) if h.contains(w)}
    with pytest.raises(RejectedInputError):
        AntiHalfspace((1,), (), 0)


def test_residuals_match_brute_force():
    from itertools import combinations

    from hyperperc.geometry import fmul, tree_gromov

    A = parse_set("ball(3)")
    reports = {r.element: r for r in halfspace_residuals(A, 1)}
    for a in A[::5]:
        halves = [{z for z in A if tree_gromov(a, fmul(a, (s,)), z) >= 1} for s in (1, -1, 2, -2)]
        one = min(len(A) - len(h) for h in halves)
        two = min(len(A) - len(h | k) for h, k in combinations(halves, 2))
        assert (reports[a].one, reports[a].two) == (one, two)
        assert one == min(halfspace_residual(A, a, fmul(a, (s,)), 1) for s in (1, -1, 2, -2))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([1, 2, -1, -2]), st.integers(0, 12)), min_size=1, max_size=25),
       st.integers(1, 6))
def test_separated_subset_is_separated_and_maximal(spec, r):
    A = sorted({(g,) * n for g, n in spec})
    S = separated_subset(A, r)
    assert all(tree_dist(u, v) >= r for i, u in enumerate(S) for v in S[i + 1:])
    assert all(any(tree_dist(a, s) < r for s in S) for a in A)


def test_occupancy_geodesic():
    Y = parse_set("geodesic(a,20)")
    assert occupancy(Y, 3) == 7
    assert occupancy(Y, 100) == 21


def test_classifier_nontrivial_loop():
    sparse = parse_set("union(geodesic(a,30,10),geodesic(b,30,10),geodesic(A,30,10),geodesic(B,30,10))")
    c = magic_classify(310, sparse, 1, 0.5, N=3, separation=100, strict=False)
    assert c.ok
    assert len(c.bad) <= len(c.good)
    assert len(c.accepted) + len(c.problematic) == len(sparse)


def test_classifier_strict_raises_on_tiny_eps():
    from hyperperc.errors import PropertyViolation

    A = parse_set("union(geodesic(a,30,10),geodesic(b,30,10))")
    try:
        c = magic_classify(310, A, 1, 0.01, N=1, separation=100, strict=True)
    except PropertyViolation:
        return
    assert c.ok


def test_single_halfspace_fraction_values():
    assert single_halfspace_failure(412, 40, 2, 3) == pytest.approx(6 / 41)
    assert single_halfspace_failure(52, 40, 2, 3, step=1) == pytest.approx(4 / 41)
    assert single_halfspace_failure(22, 1, 2, 3) == 1.0


def test_supporting_hyperplane_small():
    A = parse_set("ball(2)")
    rep = supporting_hyperplane(build_ball("free:2", 9), A, 1, 0.5)
    assert rep.found >= math.ceil(0.5 * len(A))
    assert all(w.contains_A and w.disjoint_on_ball for w in rep.witnesses)
