import json

import pytest

from hyperperc.errors import PropertyViolation, RejectedInputError
from hyperperc.percolation import Estimate
from hyperperc.records import (CSV_COLUMNS, csv_text, dumps, estimate_outputs, jsonable, make_record, read_csv,
                               record_csv, validate_record)
from hyperperc.sets import format_set, parse_set


def test_set_constructors():
    assert len(parse_set("sphere(8)")) == 8748
    assert len(parse_set("ball(2)")) == 17
    assert format_set(parse_set("geodesic(a,3,2)")) == ["id", "aa", "aaaa", "aaaaaa"]
    assert format_set(parse_set("union(words(ab, ab, id), geodesic(b,1))")) == ["id", "b", "ab"]
    assert len(parse_set("ball(2)", "lattice:2")) == 13


def test_set_file(tmp_path):
    f = tmp_path / "A.txt"
    f.write_text("# comment\nab\n\nBA  # trailing\n")
    assert format_set(parse_set(f"file:{f}")) == ["ab", "BA"]
    assert format_set(parse_set("file:A.txt", base_dir=tmp_path)) == ["ab", "BA"]
    f.write_text("ab\nxz\n")
    with pytest.raises(RejectedInputError, match=":2:"):
        parse_set(f"file:{f}")


@pytest.mark.parametrize("bad", ["sphere(-1)", "sphere(1", "blob(3)", "geodesic(a)", "union()", "file:/nope"])
def test_set_rejects(bad):
    with pytest.raises(RejectedInputError):
        parse_set(bad)


def test_jsonable_handles_numpy_and_inf():
    import numpy as np

    out = jsonable({"a": np.float64(1.5), "b": np.arange(2), "c": float("inf"), "d": (1, 2), "e": float("nan")})
    assert out == {"a": 1.5, "b": [0, 1], "c": "inf", "d": [1, 2], "e": None}


def test_record_roundtrip_and_schema():
    est = Estimate(2.5, 0.1, 100, 3, {"quantity": "susceptibility", "radius": 4, "p": 0.2,
                                      "presentation": "free:2", "wall_time_ms": 12.0})
    rec = make_record("estimate", {"experiment": {"quantity": "susceptibility"}}, estimate_outputs(est), 12.0)
    assert "wall_time_ms" not in json.dumps(rec["outputs"])
    validate_record(json.loads(dumps(rec)))
    rows = read_csv(record_csv(rec), "estimate")
    assert rows == [{"p": "0.2", "value": "2.5", "std_error": "0.1"}]
    bad = dict(rec, schema="other/9")
    with pytest.raises(PropertyViolation):
        validate_record(bad)
    with pytest.raises(PropertyViolation):
        make_record("report", {}, {"check": "x", "verdict": "maybe"}, 0)


def test_csv_header_checks():
    text = csv_text(CSV_COLUMNS["chain"], [{"p": 0.1, "chi": 1.0}])
    assert text.splitlines()[0] == "# hyperperc.csv/1"
    read_csv(text, "chain")
    with pytest.raises(PropertyViolation):
        read_csv(text, "estimate")
    with pytest.raises(PropertyViolation):
        read_csv("p,value\n1,2\n")
