from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperperc.errors import RejectedInputError, ResourceError
from hyperperc.exact import (Connect, ConnectSet, EdgeOpen, Intersection, TinyGraph, check_bk, check_fkg,
                             cluster_count_distribution, disjoint_occurrence_prob, exact_prob, indicator_via_paths,
                             random_tiny_graph, russo_check)


def test_path_connection_is_power():
    g = TinyGraph.path(4)
    assert exact_prob(g, Connect(0, 4), Fraction(1, 3)) == Fraction(1, 81)


def test_four_cycle_opposite_corners():
    # two disjoint 2-edge routes: 1 − (1 − p²)²; at p = 1/2 that is 7/16
    g = TinyGraph.cycle(4)
    assert exact_prob(g, Connect(0, 2), Fraction(1, 2)) == Fraction(7, 16)


def test_edge_open_and_intersection():
    g = TinyGraph.path(2)
    assert exact_prob(g, EdgeOpen(0), Fraction(1, 5)) == Fraction(1, 5)
    both = Intersection(EdgeOpen(0), EdgeOpen(1))
    assert exact_prob(g, both, Fraction(1, 5)) == Fraction(1, 25)


def test_connect_set():
    g = TinyGraph(3, ((0, 1), (0, 2)))
    assert exact_prob(g, ConnectSet(0, {1, 2}), Fraction(1, 2)) == Fraction(3, 4)


def test_cluster_distribution_sums_to_one():
    g = TinyGraph.cycle(5)
    dist = cluster_count_distribution(g, Fraction(2, 7))
    assert sum(dist.values()) == 1


def test_bk_equality_on_disjoint_paths():
    # the two events live on disjoint edge sets, so P(A∘B) = P(A)P(B)
    g = TinyGraph(4, ((0, 1), (1, 2), (2, 3)))
    a, b = Connect(0, 1), Connect(2, 3)
    p = Fraction(1, 3)
    assert disjoint_occurrence_prob(g, a, b, p) == exact_prob(g, a, p) * exact_prob(g, b, p)


def test_caps_and_validation():
    with pytest.raises(RejectedInputError):
        TinyGraph(3, ((0, 1),))  # disconnected
    with pytest.raises(RejectedInputError):
        TinyGraph(2, ((0, 0),))
    with pytest.raises(ResourceError):
        exact_prob(TinyGraph.path(30), Connect(0, 1), 0.5)


def test_russo_rational_order():
    g = TinyGraph.cycle(5)
    rep = russo_check(g, Connect(0, 2), Fraction(1, 2), Fraction(1, 16), halvings=2)
    assert all(abs(o - 2) < 0.05 for o in rep["orders"])


graphs = st.builds(
    lambda seed, nv, extra: random_tiny_graph(np.random.default_rng(seed), nv, min(nv - 1 + extra, nv * (nv - 1) // 2)),
    st.integers(0, 10_000), st.integers(3, 7), st.integers(0, 5),
)


@settings(max_examples=40, deadline=None)
@given(graphs, st.data())
def test_fkg_bk_hold_exactly(g, data):
    u, v, w, x = (data.draw(st.integers(0, g.n_vertices - 1)) for _ in range(4))
    if u == v or w == x:
        return
    a, b = Connect(u, v), Connect(w, x)
    grid = [Fraction(1, 5), Fraction(1, 2), Fraction(4, 5)]
    assert all(r["verdict"] == "pass" for r in check_fkg(g, a, b, grid, rational=True))
    assert all(r["verdict"] == "pass" for r in check_bk(g, a, b, grid, rational=True))


@settings(max_examples=40, deadline=None)
@given(graphs, st.data())
def test_two_indicator_routes_agree(g, data):
    u = data.draw(st.integers(0, g.n_vertices - 1))
    v = data.draw(st.integers(0, g.n_vertices - 1).filter(lambda t: t != u))
    ev = Connect(u, v)
    assert np.array_equal(ev.indicator(g), indicator_via_paths(g, ev))
