import json
import subprocess
import sys
from pathlib import Path

import pytest

from hyperperc.cli import load_config, main
from hyperperc.records import read_csv, validate_record

EXAMPLES = Path(__file__).resolve().parents[1] / "examples"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


CHI = """
[experiment]
quantity = "susceptibility"
radius = 10
p = 0.2
trials = 500
seed = 4
"""


def test_run_emits_valid_record(tmp_path, capsys):
    cfg = write(tmp_path, "chi.toml", CHI)
    code, out, _ = run(["run", cfg], capsys)
    assert code == 0
    rec = json.loads(out)
    validate_record(rec)
    assert rec["outputs"]["quantity"] == "susceptibility"
    assert rec["config"]["experiment"]["seed"] == 4


def test_record_reproduces_from_its_config_echo(tmp_path, capsys):
    cfg = write(tmp_path, "chi.toml", CHI)
    first = tmp_path / "first.json"
    assert run(["run", cfg, "--out", first], capsys)[0] == 0
    second = tmp_path / "second.json"
    assert run(["run", first, "--out", second], capsys)[0] == 0
    a, b = json.loads(first.read_text()), json.loads(second.read_text())
    assert a["outputs"] == b["outputs"] and a["config"] == b["config"]


def test_seed_flag_overrides(tmp_path, capsys):
    cfg = write(tmp_path, "chi.toml", CHI)
    _, out, _ = run(["run", cfg, "--seed", "9"], capsys)
    assert json.loads(out)["config"]["experiment"]["seed"] == 9


def test_unknown_key_reports_line(tmp_path, capsys):
    cfg = write(tmp_path, "bad.toml", CHI + "\n[params]\nbogus = 1\n")
    code, _, err = run(["run", cfg], capsys)
    assert code == 1
    assert "bad.toml:10" in err and "bogus" in err


@pytest.mark.parametrize("text,needle", [
    ("[experiment]\nradius = 3\n", "quantity"),
    ("[experiment]\nquantity = \"nope\"\n", "unknown quantity"),
    ("[experiment]\nquantity = \"susceptibility\"\np = 2.0\n", "p must lie"),
    ("[experiment]\nquantity = \"susceptibility\"\nradius = \"x\"\n", "wrong type"),
    ("[other]\nx = 1\n", "unknown section"),
    ("[experiment\n", "bad.toml"),
])
def test_invalid_configs_exit_1(tmp_path, capsys, text, needle):
    cfg = write(tmp_path, "bad.toml", text)
    code, _, err = run(["run", cfg], capsys)
    assert code == 1 and needle in err


def test_missing_config_and_usage_errors(capsys):
    assert run(["run", "/no/such.toml"], capsys)[0] == 1
    assert run(["frobnicate"], capsys)[0] == 1
    assert run(["barrier", "vertical", "--radius", "x"], capsys)[0] == 1
    assert run([], capsys)[0] == 1


def test_vertex_cap_env(monkeypatch, capsys):
    monkeypatch.setenv("HYPERPERC_MAX_VERTICES", "50")
    code, _, err = run(["ball", "free:2", "--radius", "4"], capsys)
    assert code == 1 and "HYPERPERC_MAX_VERTICES" in err


def test_ball_export(capsys):
    code, out, _ = run(["ball", "free:2", "--radius", "1"], capsys)
    assert code == 0 and out.splitlines() == ["vertices 5 radius 1", "0 1 0", "0 2 1", "0 3 2", "0 4 3"]
    code, out, _ = run(["ball", "lattice:2", "--radius", "1", "--format", "csv"], capsys)
    assert out.startswith("# hyperperc.csv/1")


def test_sweep_csv_matches_schema(capsys):
    code, out, _ = run(["sweep", "--grid", "0.1:0.3:0.1"], capsys)
    assert code == 0
    rows = read_csv(out, "chain")
    assert [float(r["p"]) for r in rows] == [0.1, 0.2, 0.3]
    assert float(rows[1]["chi"]) == pytest.approx(3.0)
    assert all(float(r["pc_gap_chi"]) <= 0.5 for r in rows)


def test_classify_and_single(capsys):
    code, out, _ = run(["classify", "--set", "ball(2)", "--D", "1", "--eps", "0.5"], capsys)
    assert code == 0 and json.loads(out)["outputs"]["verdict"] == "pass"
    code, out, _ = run(["classify", "--mode", "single", "--R", "40", "--D", "2", "--N", "3"], capsys)
    assert json.loads(out)["outputs"]["fraction"] == pytest.approx(6 / 41)


def test_barrier_commands(tmp_path, capsys):
    code, out, _ = run(["barrier", "vertical", "--radius", "40", "--step", "10", "--count", "3",
                        "--export-dir", tmp_path], capsys)
    assert code == 0
    assert len(json.loads(out)["outputs"]["levels"]) == 3
    assert (tmp_path / "vertical_level3.txt").exists()
    code, out, _ = run(["barrier", "capacity", "--radius", "110"], capsys)
    assert code == 0 and json.loads(out)["outputs"]["difference"] <= 1e-12


def test_planted_collision_exits_2(capsys):
    code, out, err = run(["barrier", "branching", "--k-max", "2", "--plant-collision"], capsys)
    assert code == 2
    outs = json.loads(out)["outputs"]
    assert outs["collisions"] and outs["collision_reproduces"] is True
    code, _, err = run(["verify", "branching", "--inject-fault", "collision"], capsys)
    assert code == 2 and "collision at k=2" in err


def test_verify_is_byte_identical(capsys):
    _, a, _ = run(["verify", "rng", "gromov_example", "fkg", "--seed", "5"], capsys)
    _, b, _ = run(["verify", "rng", "gromov_example", "fkg", "--seed", "5"], capsys)
    assert a == b and json.loads(a)["ok"]
    assert run(["verify", "nosuchsuite"], capsys)[0] == 1


def test_example_configs_parse():
    configs = sorted(EXAMPLES.glob("*.toml"))
    assert configs
    for c in configs:
        load_config(c)


def test_module_entry_point_exit_codes(tmp_path):
    ok = subprocess.run([sys.executable, "-m", "hyperperc", "ball", "free:2", "--radius", "1"],
                        capture_output=True, text=True)
    assert ok.returncode == 0
    bad = subprocess.run([sys.executable, "-m", "hyperperc", "run", str(tmp_path / "none.toml")],
                         capture_output=True, text=True)
    assert bad.returncode == 1 and "not found" in bad.stderr
