import json
import warnings

import numpy as np
import pytest

from hyperperc.barriers import (Cone, VacuousBarrierWarning, branching_capacity, check_roughly_branching,
                                compare_vertical_projection, f_barrier, f_image_witness, f_nf, g_de_set, is_barrier,
                                nested_capacity, nf_set, plant_collision, projection_barriers, reproduce_collision,
                                vertical_barriers, vertical_capacity_closed_form)
from hyperperc.errors import RejectedInputError
from hyperperc.groups import build_ball


def test_cone_membership_and_count():
    c = Cone((1, 1))
    assert c.contains((1, 1, 2)) and not c.contains((1, 2))
    b = build_ball("free:2", 5)
    assert c.count(5, 2) == sum(1 for w in b.words if c.contains(w))


def test_small_vertical_family():
    fam = vertical_barriers(3, 1, 1)
    words = sorted(fam.levels[0])
    assert words == sorted([(1,), (1, 2), (1, -2), (1, 2, 2), (1, -2, -2)])
    assert fam.verify()[0].ok


def test_bfs_and_tree_checks_agree():
    b = build_ball("free:2", 8)
    fam = vertical_barriers(b, 2, 3)
    assert [r.ok for r in fam.verify(b)] == [r.ok for r in fam.verify()] == [True] * 3


def test_missing_barrier_gives_path():
    b = build_ball("free:2", 6)
    ok, path = is_barrier(b, [], 0, b.sphere(6))
    assert not ok and len(path) == 7
    # removing one word from a vertical level opens a path
    lvl = [w for w in vertical_barriers(6, 2, 1).levels[0] if w != (1, 1)]
    ok, path = is_barrier(b, lvl, 0, [(1, 1, 1)])
    assert not ok


def test_vacuous_warning():
    b = build_ball("free:2", 4)
    with pytest.warns(VacuousBarrierWarning):
        res = is_barrier(b, b.sphere(2), 0, b.sphere(2))
    assert res.ok


def test_vertical_levels_sit_inside_projection_levels():
    rows = compare_vertical_projection(40, 10, 3)
    assert all(r["vertical_subset"] for r in rows)
    b = build_ball("free:2", 12)
    fam = projection_barriers(b, (1,) * 12, spacing=4, width=1, cap=4, axis_min=2)
    assert fam.count == 3
    assert all(r.ok for r in fam.verify(b))


def test_export_level_header():
    fam = vertical_barriers(20, 10, 1)
    text = fam.export_level(0)
    head = json.loads(text.splitlines()[0])
    assert head["kind"] == "vertical" and head["level_index"] == 1
    assert len([ln for ln in text.splitlines()[1:] if ln.strip()]) == len(fam.levels[0])


def test_nf_and_gde_sets():
    b = build_ball("free:2", 4)
    nf1 = nf_set(b, 1).members(b)
    assert sorted(nf1) == sorted([(2,) * k for k in range(5)] + [(-2,) * k for k in range(1, 5)])
    with pytest.raises(RejectedInputError):
        g_de_set(10, 1, 20)


def test_f_maps():
    assert f_barrier((1,), 1)[-1] == 2
    g = (2,)
    assert f_nf(g, 1) == (2,) + (1,) * 50


def test_branching_certificates():
    B = vertical_barriers(20, 10, 1).levels[0]
    Bp, r = f_image_witness(B, 1)
    cert = check_roughly_branching(B, Bp, r, 3)
    assert cert.ok and cert.covered and cert.injective
    bad = check_roughly_branching(B, plant_collision(Bp), r, 3)
    assert not bad.ok
    _, s1, s2, _ = bad.collisions[0]
    assert reproduce_collision(bad.witness, s1, s2)
    assert not check_roughly_branching([(1,)], [(1,), (1, 1)], 0, 2).injective


def test_capacity_closed_form_and_limits():
    fam = vertical_barriers(110, 10, 9)
    cap = branching_capacity(110, fam.levels[0], 1 / 3)
    assert cap["capacity"] == pytest.approx(vertical_capacity_closed_form(1 / 3, 10), abs=1e-12)
    assert nested_capacity(fam, 0.3)["holds"]
    with pytest.raises(RejectedInputError):
        branching_capacity(110, fam.levels[0], 0.5)
