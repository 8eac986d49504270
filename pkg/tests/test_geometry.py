import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperperc.errors import RejectedInputError
from hyperperc.geometry import (FiniteMetric, GromovHalf, MetricHalf, delta_details, estimate_delta, fmul,
                                geodesic, gromov_product, halfspace_members, lcp, project, tree_dist, tree_gromov,
                                tree_project)
from hyperperc.groups import build_ball

letters = st.sampled_from([1, -1, 2, -2])


def reduced(ws):
    out = []
    for x in ws:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


words = st.lists(letters, max_size=10).map(reduced)


def test_four_cycle_delta_half():
    m = FiniteMetric.from_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    assert estimate_delta(m) == 0.5


def test_lattice_ball_has_positive_delta():
    assert delta_details(FiniteMetric.from_ball(build_ball("lattice:2", 3)))["delta"] > 0


def test_delta_needs_four_points():
    with pytest.raises(RejectedInputError):
        delta_details(FiniteMetric.from_matrix(np.zeros((3, 3))))


def test_gromov_product_with_elements(f2):
    x, y, z = f2.identity(), f2.parse("aaba"), f2.parse("aaBab")
    assert gromov_product(x, y, z) == 2


def test_geodesic_and_projection(ball6, f2):
    g = geodesic(ball6, f2.identity(), f2.parse("aaaa"))
    assert g.length == 4
    proj = project(ball6, f2.parse("aab"), g)
    assert proj == {ball6.index(f2.parse("aa"))}


def test_halfspace_members(ball6, f2):
    x, y = f2.identity(), f2.parse("aaa")
    mem = halfspace_members(ball6, GromovHalf(x, y, 2))
    assert all(ball6.words[i][:2] == (1, 1) for i in mem)
    half = halfspace_members(ball6, MetricHalf(x, y))
    assert ball6.index(x) in half and ball6.index(y) not in half


@settings(max_examples=200, deadline=None)
@given(words, words, words)
def test_tree_gromov_is_lcp_of_translates(x, y, z):
    # (y|z)_x = |lcp(x⁻¹y, x⁻¹z)| on the tree
    xi = tuple(-c for c in reversed(x))
    assert tree_gromov(x, y, z) == lcp(fmul(xi, y), fmul(xi, z))
    assert tree_dist(x, y) == tree_dist(y, x)
    assert tree_dist(x, z) <= tree_dist(x, y) + tree_dist(y, z)


@settings(max_examples=200, deadline=None)
@given(words, words, words)
def test_tree_projection_is_nearest(x, g, h):
    p = tree_project(x, g, h)
    assert tree_dist(g, p) + tree_dist(p, h) == tree_dist(g, h)
    assert tree_dist(x, p) == tree_dist(x, g) - tree_gromov(g, x, h)
