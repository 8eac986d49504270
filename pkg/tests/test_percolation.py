import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from hyperperc.errors import RejectedInputError
from hyperperc.groups import build_ball, tree_ball
from hyperperc.percolation import (Estimate, PercSample, chi_tree_closed_form, chi_tree_truncated, clusters,
                                   iota_sphere_exact, known_pc, n_infinity_proxy, sample, susceptibility,
                                   triangle_diagram, triangle_tail_bound, triangle_tree_exact, two_point)
from hyperperc.rng import py_splitmix64, seed_to_u64, splitmix64, uniforms


def test_splitmix_matches_reference():
    # first output of the published generator seeded with 0
    assert py_splitmix64(0) == 0xE220A8397B1DCDAF
    for x in (0, 1, 12345, 2**63 + 7, 2**64 - 1):
        assert int(splitmix64(np.uint64(x))) == py_splitmix64(x)


def test_uniforms_deterministic_and_in_range():
    keys = np.arange(5000, dtype=np.uint64)
    u = uniforms(seed_to_u64(9), keys)
    assert np.array_equal(u, uniforms(seed_to_u64(9), keys))
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.02


def test_closed_form_chi_from_series():
    p, n = sp.symbols("p n", positive=True)
    series = 1 + sp.summation(4 * 3 ** (n - 1) * p**n, (n, 1, sp.oo))
    closed = sp.piecewise_fold(series).args[0][0]  # the convergent branch, p < 1/3
    assert sp.simplify(closed - (1 + p) / (1 - 3 * p)) == 0
    for x in (0.1, 0.2, 0.3):
        assert chi_tree_closed_form(x) == pytest.approx((1 + x) / (1 - 3 * x))
    assert chi_tree_truncated(Fraction(1, 5), 40) < Fraction(3)


def test_known_pc():
    from hyperperc.groups import parse_presentation

    assert known_pc(parse_presentation("free:2")) == pytest.approx(1 / 3)
    assert known_pc(parse_presentation("lattice:2")) == pytest.approx(0.5)


def test_sample_monotone_coupling(ball6):
    lo, hi = sample(ball6, 0.2, seed=3), sample(ball6, 0.6, seed=3)
    assert np.all(lo.open <= hi.open)
    assert np.array_equal(sample(ball6, 0.4, seed=3).open, sample(ball6, 0.4, seed=3).open)


def test_clusters_on_small_ball():
    b = build_ball("free:2", 1)
    part = clusters(b, PercSample.from_bits("1010"))
    assert part.n_clusters == 3
    assert part.same(0, 1) and part.same(0, 3) and not part.same(0, 2)
    assert sorted(part.sizes.tolist()) == [1, 1, 3]


def test_two_point_extremes(ball6, f2):
    g = f2.parse("ab")
    assert two_point(ball6, 1.0, g, 10, 0).value == 1.0
    assert two_point(ball6, 0.0, g, 10, 0).value == 0.0


def test_susceptibility_thread_invariant():
    tb = tree_ball("free:2", 20)
    a = susceptibility(tb, 0.25, 2000, 7, threads=1)
    b = susceptibility(tb, 0.25, 2000, 7, threads=4)
    assert a.value == b.value and a.std_error == b.std_error


def test_explicit_and_implicit_tree_agree():
    a = susceptibility(build_ball("free:2", 6), 0.3, 500, 11)
    b = susceptibility(tree_ball("free:2", 6), 0.3, 500, 11)
    assert a.value == pytest.approx(b.value)


def test_triangle_exact_rational_and_tail():
    t = triangle_tree_exact(Fraction(1, 5), 6)
    assert isinstance(t, Fraction)
    assert float(t) == pytest.approx(triangle_tree_exact(0.2, 6), rel=1e-12)
    tail = triangle_tail_bound(0.2, 6)
    assert triangle_tree_exact(0.2, 40) - triangle_tree_exact(0.2, 6) <= tail * (1 + 1e-9)
    est = triangle_diagram(tree_ball("free:2", 10), 0.2)
    assert est.meta["tail_bound"] > 0


def test_triangle_monte_carlo_near_exact():
    b = build_ball("free:2", 5)
    est = triangle_diagram(b, 0.15, 3000, seed=1)
    exact = triangle_tree_exact(0.15, 5)
    assert est.within(exact, 4.0, floor=0.02)


def test_iota_sphere_zero_is_one_over_chi():
    assert iota_sphere_exact(0.2, 0) == pytest.approx(1 / chi_tree_closed_form(0.2))


def test_n_infinity_extremes():
    b = build_ball("free:2", 4)
    assert n_infinity_proxy(b, 0.0, 20, 0, 1).value == 0.0
    assert n_infinity_proxy(b, 1.0, 20, 0, 1).value == 1.0


def test_estimate_within():
    e = Estimate(1.0, 0.1, 10, 0)
    assert e.within(1.25, 3.0) and not e.within(1.5, 3.0)


@pytest.mark.parametrize("p", [-0.1, 1.5, math.nan])
def test_bad_p_rejected(ball6, p):
    with pytest.raises(RejectedInputError):
        susceptibility(ball6, p, 10, 0)


def test_bad_trials_rejected(ball6):
    with pytest.raises(RejectedInputError):
        susceptibility(ball6, 0.2, 0, 0)
