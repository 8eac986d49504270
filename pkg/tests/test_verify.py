import json

import pytest

from hyperperc.errors import RejectedInputError
from hyperperc.records import dumps
from hyperperc.verify import SUITES, verify_all


@pytest.mark.slow
def test_all_suites_pass():
    s = verify_all(seed=0)
    assert s["n_suites"] == len(SUITES)
    assert s["ok"], {x["name"]: x["failures"][:3] for x in s["suites"] if not x["ok"]}


def test_summary_is_deterministic():
    names = ["rng", "triangle", "iota", "disjoint_figure", "bk"]
    assert dumps(verify_all(3, names)) == dumps(verify_all(3, names))
    assert "wall" not in json.dumps(verify_all(3, ["rng"]))


def test_fault_injection_is_reported():
    s = verify_all(0, ["branching"], inject_fault="collision")
    assert not s["ok"] and s["failed"] == ["branching"]
    assert s["suites"][0]["info"]["collision_reproduces"] is True


def test_unknown_suite():
    with pytest.raises(RejectedInputError):
        verify_all(0, ["nope"])
