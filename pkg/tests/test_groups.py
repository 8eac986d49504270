import networkx as nx
import numpy as np
import pytest

from hyperperc.errors import RejectedInputError, ResourceError
from hyperperc.groups import (FreeGroup, build_ball, format_free_word, parse_presentation, reduce, tree_ball,
                              word_distance)


def test_free_reduction_and_parse(f2):
    assert reduce([1, -1, 2], f2).word == (2,)
    assert f2.parse("aAbB").norm == 0
    assert f2.parse("a^3 B").word == (1, 1, 1, -2)
    assert format_free_word((1, -1 * 2, -1)) == "aBA"


def test_word_distance_examples(f2):
    assert word_distance(f2.identity(), f2.parse("aaba")) == 4
    z2 = parse_presentation("lattice:2")
    assert word_distance(z2.identity(), z2.element([1, 1, 1, -2, -2])) == 5


def test_free_product_relators():
    g = parse_presentation("freeprod:2,3")
    assert reduce([1, 1, 2, 2, 2], g).norm == 0
    assert reduce([1, 2, 1], g).norm == 3


@pytest.mark.parametrize("lit", ["free:2", "lattice:2", "freeprod:2,3", "product(free:1,lattice:1)"])
def test_ball_matches_bfs_oracle(lit):
    ball = build_ball(lit, 4)
    g = nx.Graph()
    g.add_nodes_from(range(ball.n_vertices))
    g.add_edges_from((int(u), int(v)) for u, v, _ in ball.edges)
    dist = nx.single_source_shortest_path_length(g, 0)
    assert len(dist) == ball.n_vertices
    assert all(dist[i] == ball.norms[i] for i in range(ball.n_vertices))
    assert ball.n_vertices == ball.pres.ball_size(4)


def test_free_sphere_sizes_and_small_ball():
    b = build_ball("free:2", 6)
    assert np.bincount(b.norms).tolist() == [1, 4, 12, 36, 108, 324, 972]
    b2 = build_ball("free:2", 2)
    assert (b2.n_vertices, b2.n_edges) == (17, 16)


def test_lattice_counts():
    b = build_ball("lattice:2", 3)
    assert b.n_vertices == 25  # 2r²+2r+1


def test_index_roundtrip(ball6):
    for i in (0, 5, 100, ball6.n_vertices - 1):
        assert ball6.index(ball6.element(i)) == i


def test_export_text_header(ball6):
    first = ball6.export_text().splitlines()[0]
    assert first.startswith(f"vertices {ball6.n_vertices}")


def test_vertex_cap(monkeypatch):
    monkeypatch.setenv("HYPERPERC_MAX_VERTICES", "100")
    with pytest.raises(ResourceError):
        build_ball("free:2", 5)


def test_rejects_bad_literals():
    for lit in ("free:0", "nonsense", "lattice:x"):
        with pytest.raises(RejectedInputError):
            parse_presentation(lit)
    with pytest.raises(RejectedInputError):
        parse_presentation("free:2").parse("xyz")


def test_tree_ball_is_implicit():
    tb = tree_ball("free:2", 60)
    assert isinstance(tb.pres, FreeGroup)
    assert tb.n_vertices == 1 + 4 * (3**60 - 1) // 2
