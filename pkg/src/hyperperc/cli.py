"""Command-line front end.

Exit codes: 0 when everything ran and every check passed, 1 for usage and
input errors (bad flags, unreadable or invalid config, resource caps), 2 when
a computed check fails.  ``HYPERPERC_MAX_VERTICES`` caps explicit ball sizes.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import warnings
from pathlib import Path
from typing import Any, Callable

from . import __version__
from .errors import HyperpercError, PropertyViolation, RejectedInputError, ResourceError
from .records import CSV_COLUMNS, Stopwatch, csv_text, dumps, estimate_outputs, make_record, record_csv

try:  # Python 3.11+
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as _toml

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


class UsageError(HyperpercError):
    """Bad command line or configuration."""


class CheckFailed(HyperpercError):
    """A computed verdict came out negative; carries the record to emit."""

    def __init__(self, message: str, record: dict | None = None):
        super().__init__(message)
        self.record = record


# ------------------------------------------------------------------ config

EXPERIMENT_KEYS = {
    "quantity": str, "presentation": str, "radius": int, "trials": int, "seed": int, "p": float,
    "p_grid": (list, str), "threads": int, "output": str, "format": str,
}

# per-quantity parameter keys with their types; None marks "required"
PARAM_SPECS: dict[str, dict[str, tuple]] = {
    "pc": {"threshold": (float, 0.5), "method": (str, "crossing")},
    "two_point": {"g": (str, None)},
    "susceptibility": {},
    "triangle": {"mode": (str, "auto")},
    "iota": {"set": (str, None), "mode": (str, "auto")},
    "n_infinity": {"core_radius": (int, None)},
    "delta": {"sample_size": (int, 0)},
    "classify": {"set": (str, None), "D": (int, None), "eps": (float, None), "N": (float, 0.0),
                 "separation": (float, 0.0), "strict": (bool, True)},
    "supporting": {"set": (str, None), "D": (int, None), "eps": (float, None)},
    "single_halfspace": {"R": (int, None), "D": (int, None), "N": (int, None), "step": (int, 10)},
    "barrier_vertical": {"step": (int, 10), "count": (int, 9)},
    "barrier_projection": {"y": (str, None), "K0": (float, 1.0), "spacing": (float, 100.0), "width": (float, 25.0),
                           "cap": (float, 100.0), "axis_min": (float, 5.0)},
    "de_barrier": {"D": (int, 1), "E": (int, 6), "E_prime": (int, -1)},
    "branching": {"kind": (str, "barrier"), "D": (int, 1), "k_max": (int, 3), "separation": (int, 2),
                  "step": (int, 10), "base_radius": (int, 20), "plant_collision": (bool, False)},
    "capacity": {"step": (int, 10)},
    "bk_barrier": {"barrier_step": (int, 3), "target_depth": (int, 6)},
    "sweep": {"columns": (str, "chain"), "set": (str, "geodesic(a,20)"), "mode": (str, "auto")},
    "verify": {"suites": (list, []), "edges": (int, 10), "pairs": (int, 50)},
}

SECTIONS = {"experiment", "params"}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of every ``key = value`` line, keyed by (section, key)."""
    out, section = {}, ""
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.\-]+)\s*\]$", s)
        if m:
            section = m.group(1)
            out.setdefault((section, ""), n)
            continue
        m = re.match(r'^("?)([A-Za-z0-9_\-]+)\1\s*=', s)
        if m:
            out.setdefault((section, m.group(2)), n)
    return out


def _type_ok(v, t) -> bool:
    if t is float:
        return isinstance(v, (int, float)) and not isinstance(v, bool)
    if t is int:
        return isinstance(v, int) and not isinstance(v, bool)
    if isinstance(t, tuple):
        return isinstance(v, t)
    return isinstance(v, t)


def validate_config(raw: dict, lines: dict | None = None, source: str = "<config>") -> dict:
    """Check sections, keys and types; return the normalised config with defaults filled."""
    lines = lines or {}

    def where(section, key=""):
        n = lines.get((section, key))
        return f"{source}:{n}" if n else source

    for sec in raw:
        if sec not in SECTIONS:
            raise UsageError(f"{where(sec)}: unknown section [{sec}] (expected [experiment] and [params])")
        if not isinstance(raw[sec], dict):
            raise UsageError(f"{where('', sec)}: '{sec}' must be a table")
    exp = dict(raw.get("experiment", {}))
    par = dict(raw.get("params", {}))
    for k, v in exp.items():
        if k not in EXPERIMENT_KEYS:
            raise UsageError(f"{where('experiment', k)}: unknown key '{k}' in [experiment]")
        if not _type_ok(v, EXPERIMENT_KEYS[k]):
            raise UsageError(f"{where('experiment', k)}: key '{k}' has the wrong type ({type(v).__name__})")
    q = exp.get("quantity")
    if q is None:
        raise UsageError(f"{where('experiment')}: [experiment] needs a 'quantity' key")
    if q not in PARAM_SPECS:
        raise UsageError(f"{where('experiment', 'quantity')}: unknown quantity '{q}'; choose from {sorted(PARAM_SPECS)}")
    spec = PARAM_SPECS[q]
    for k, v in par.items():
        if k not in spec:
            raise UsageError(f"{where('params', k)}: unknown key '{k}' in [params] for quantity '{q}'")
        t = spec[k][0]
        if not _type_ok(v, t):
            raise UsageError(f"{where('params', k)}: key '{k}' has the wrong type ({type(v).__name__})")
    for k, (t, default) in spec.items():
        if k not in par:
            if default is None:
                raise UsageError(f"{where('params')}: quantity '{q}' needs parameter '{k}'")
            par[k] = default
    exp.setdefault("presentation", "free:2")
    exp.setdefault("seed", 0)
    _check_ranges(exp, par, where)
    return {"experiment": exp, "params": par}


def _check_ranges(exp, par, where):
    def bad(sec, key, msg):
        raise UsageError(f"{where(sec, key)}: {msg}")

    if "radius" in exp and exp["radius"] < 0:
        bad("experiment", "radius", "radius must be non-negative")
    if "trials" in exp and exp["trials"] < 1:
        bad("experiment", "trials", "trials must be positive")
    if "p" in exp and not 0 <= exp["p"] <= 1:
        bad("experiment", "p", "p must lie in [0, 1]")
    if "p_grid" in exp:
        grid = parse_grid(exp["p_grid"])
        if any(not 0 <= x <= 1 for x in grid):
            bad("experiment", "p_grid", "grid points must lie in [0, 1]")
    if "format" in exp and exp["format"] not in ("json", "csv"):
        bad("experiment", "format", "format must be 'json' or 'csv'")
    if "eps" in par and not 0 < par["eps"] < 1:
        bad("params", "eps", "eps must lie in (0, 1)")
    for k in ("D", "k_max", "step", "count", "R"):
        if k in par and par[k] < 1:
            bad("params", k, f"{k} must be positive")
    from .groups import parse_presentation

    try:
        parse_presentation(exp["presentation"])
    except RejectedInputError as exc:
        bad("experiment", "presentation", str(exc))


def parse_grid(g) -> list[float]:
    if isinstance(g, list):
        return [float(x) for x in g]
    m = re.fullmatch(r"\s*([0-9.eE+-]+)\s*:\s*([0-9.eE+-]+)\s*:\s*([0-9.eE+-]+)\s*", g)
    if not m:
        raise UsageError(f"grid '{g}' is not of the form start:stop:step")
    a, b, s = (float(x) for x in m.groups())
    if s <= 0 or b < a:
        raise UsageError("grid needs step > 0 and stop ≥ start")
    n = int(round((b - a) / s))
    return [round(a + i * s, 12) for i in range(n + 1)]


def load_config(path: str | Path) -> dict:
    """Read a TOML config, or the config echo inside a JSON result record."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        raw = data.get("config", data) if isinstance(data, dict) else None
        if not isinstance(raw, dict):
            raise UsageError(f"{path}: expected a JSON object")
        return validate_config(raw, None, str(path))
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return validate_config(raw, _key_lines(text), str(path))


# ---------------------------------------------------------------- handlers


def _need(exp, key):
    if key not in exp:
        raise UsageError(f"[experiment] needs '{key}' for quantity '{exp['quantity']}'")
    return exp[key]


def _pres(exp):
    from .groups import parse_presentation

    return parse_presentation(exp["presentation"])


def _free(exp):
    from .groups import FreeGroup

    pres = _pres(exp)
    if not isinstance(pres, FreeGroup):
        raise UsageError(f"quantity '{exp['quantity']}' is specialised to free groups")
    return pres


def _words(par, exp, key="set"):
    from .sets import parse_set

    return parse_set(par[key], _pres(exp), base_dir=exp.get("_base_dir"))


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def h_pc(exp, par, threads):
    from .percolation import pc_estimate

    est = pc_estimate(_pres(exp), _need(exp, "radius"), _need(exp, "trials"), exp["seed"],
                      threshold=par["threshold"], method=par["method"], threads=threads)
    return "estimate", estimate_outputs(est, p=None)


def h_two_point(exp, par, threads):
    from .groups import build_ball
    from .percolation import two_point

    ball = build_ball(_pres(exp), _need(exp, "radius"))
    g = ball.pres.parse(par["g"]) if par["g"] not in ("id", "") else ball.pres.identity()
    est = two_point(ball, _need(exp, "p"), g, _need(exp, "trials"), exp["seed"], threads)
    return "estimate", estimate_outputs(est, g=par["g"])


def h_susceptibility(exp, par, threads):
    from .groups import FreeGroup, build_ball, tree_ball
    from .percolation import susceptibility

    pres = _pres(exp)
    r = _need(exp, "radius")
    ball = tree_ball(pres, r) if isinstance(pres, FreeGroup) else build_ball(pres, r)
    est = susceptibility(ball, _need(exp, "p"), _need(exp, "trials"), exp["seed"], threads)
    return "estimate", estimate_outputs(est)


def h_triangle(exp, par, threads):
    from .groups import FreeGroup, build_ball, tree_ball
    from .percolation import triangle_diagram

    r = _need(exp, "radius")
    mode = par["mode"]
    if mode == "auto":
        mode = "exact" if isinstance(_pres(exp), FreeGroup) else "monte_carlo"
    if mode == "exact":
        est = triangle_diagram(tree_ball(_free(exp), r), _need(exp, "p"), "exact", exp["seed"])
    else:
        est = triangle_diagram(build_ball(_pres(exp), r), _need(exp, "p"), _need(exp, "trials"), exp["seed"], threads)
    return "estimate", estimate_outputs(est)


def h_iota(exp, par, threads):
    from .groups import FreeGroup, build_ball
    from .percolation import Estimate, iota_ratio, iota_tree_exact

    A = _words(par, exp)
    p = _need(exp, "p")
    pres = _pres(exp)
    mode = par["mode"]
    if mode == "auto":
        mode = "exact" if isinstance(pres, FreeGroup) else "monte_carlo"
    if mode == "exact":
        val = iota_tree_exact(p, A, _free(exp).rank)
        est = Estimate(float(val), 0.0, 0, exp["seed"], {"quantity": "iota", "mode": "exact", "p": p,
                                                          "presentation": pres.literal, "set_size": len(A)})
        return "estimate", estimate_outputs(est, radius=max(len(w) for w in A))
    ball = build_ball(pres, _need(exp, "radius"))
    est = iota_ratio(ball, p, A, _need(exp, "trials"), exp["seed"], threads=threads)
    return "estimate", estimate_outputs(est)


def h_n_infinity(exp, par, threads):
    from .groups import build_ball
    from .percolation import n_infinity_proxy

    ball = build_ball(_pres(exp), _need(exp, "radius"))
    est = n_infinity_proxy(ball, _need(exp, "p"), _need(exp, "trials"), exp["seed"], par["core_radius"], threads)
    return "estimate", estimate_outputs(est)


def h_delta(exp, par, threads):
    from .geometry import FiniteMetric, delta_details
    from .groups import build_ball

    ball = build_ball(_pres(exp), _need(exp, "radius"))
    d = delta_details(FiniteMetric.from_ball(ball), par["sample_size"] or None, exp["seed"])
    return "report", {"check": "delta", "presentation": ball.pres.literal, "radius": ball.radius, **d,
                      "verdict": "pass"}


def h_classify(exp, par, threads):
    from .magic import magic_classify

    A = _words(par, exp)
    _free(exp)
    radius = exp.get("radius", max(len(w) for w in A) + 6 * par["D"])
    c = magic_classify(radius, A, par["D"], par["eps"], N=par["N"] or None, separation=par["separation"] or None,
                       strict=False)
    out = {"check": "magic_classify", "verdict": _verdict(c.ok), **c.to_json()}
    if par["strict"] and not c.ok:
        return "report", out
    out["verdict"] = "pass" if (c.ok or not par["strict"]) else "fail"
    return "report", out


def h_supporting(exp, par, threads):
    import math

    from .groups import build_ball
    from .magic import supporting_hyperplane

    A = _words(par, exp)
    ball = build_ball(_free(exp), _need(exp, "radius"))
    rep = supporting_hyperplane(ball, A, par["D"], par["eps"])
    ok = rep.found >= math.ceil((1 - par["eps"]) * len(A))
    return "report", {"check": "supporting_hyperplane", "verdict": _verdict(ok), **rep.to_json()}


def h_single(exp, par, threads):
    from .magic import single_halfspace_failure

    radius = exp.get("radius", par["R"] * par["step"] + 6 * par["D"] + 2)
    fr = single_halfspace_failure(radius, par["R"], par["D"], par["N"], step=par["step"])
    return "report", {"check": "single_halfspace_failure", "fraction": fr, "at_most_0.1": fr <= 0.1,
                      "R": par["R"], "D": par["D"], "N": par["N"], "step": par["step"], "verdict": "pass"}


def _family_outputs(fam, results):
    return {
        "check": "barrier_family",
        "family": fam.to_json(),
        "levels": [dict(level=i + 1, **r.to_json()) for i, r in enumerate(results)],
        "verdict": _verdict(all(r.ok for r in results)),
    }


def h_barrier_vertical(exp, par, threads):
    from .barriers import vertical_barriers

    _free(exp)
    fam = vertical_barriers(_need(exp, "radius"), par["step"], par["count"])
    return "report", _family_outputs(fam, fam.verify())


def h_barrier_projection(exp, par, threads):
    from .barriers import projection_barriers

    pres = _free(exp)
    y = pres.parse(par["y"]).word
    fam = projection_barriers(_need(exp, "radius"), y, par["K0"], par["spacing"], par["width"], par["cap"],
                              par["axis_min"])
    return "report", _family_outputs(fam, fam.verify())


def h_de_barrier(exp, par, threads):
    from .barriers import de_barrier_check

    _free(exp)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = de_barrier_check(_need(exp, "radius"), par["D"], par["E"], None if par["E_prime"] < 0 else par["E_prime"])
    return "report", {"check": "de_barrier", **rep, "verdict": _verdict(rep["ok"])}


def h_branching(exp, par, threads):
    from .barriers import (check_roughly_branching, f_image_witness, nf_set, plant_collision, reproduce_collision,
                           vertical_barriers)
    from .groups import build_ball

    _free(exp)
    if par["kind"] == "barrier":
        B = vertical_barriers(par["base_radius"], par["step"], 1).levels[0]
    elif par["kind"] == "nf":
        B = nf_set(build_ball(_free(exp), par["base_radius"]), par["D"])
    else:
        raise UsageError("branching kind must be 'barrier' or 'nf'")
    Bp, r = f_image_witness(B, par["D"], par["kind"], par["separation"])
    if par["plant_collision"]:
        Bp = plant_collision(Bp)
    cert = check_roughly_branching(B, Bp, r, par["k_max"])
    out = {"check": "roughly_branching", **cert.to_json(), "verdict": _verdict(cert.ok)}
    if cert.collisions:
        _, s1, s2, _ = cert.collisions[0]
        out["collision_reproduces"] = reproduce_collision(cert.witness, s1, s2)
    return "report", out


def h_capacity(exp, par, threads):
    from .barriers import branching_capacity, vertical_barriers, vertical_capacity_closed_form

    radius = _need(exp, "radius")
    p = exp.get("p", 1 / 3)
    B = vertical_barriers(radius, par["step"], 1).levels[0]
    cap = branching_capacity(radius, B, p)
    closed = vertical_capacity_closed_form(p, par["step"])
    return "report", {"check": "capacity", **cap, "closed_form": closed, "difference": abs(cap["capacity"] - closed),
                      "verdict": _verdict(cap["at_most_one"])}


def h_bk_barrier(exp, par, threads):
    from .barriers import Cone, vertical_barriers
    from .exact import bk_barrier_check
    from .groups import build_ball

    ball = build_ball(_free(exp), _need(exp, "radius"))
    B = vertical_barriers(ball, par["barrier_step"], 1).levels[0].members(ball)
    A = [w for w in ball.words if Cone((1,) * par["target_depth"]).contains(w)]
    rep = bk_barrier_check(ball, A, B, _need(exp, "p"), exp.get("trials"), exp["seed"], threads=threads)
    return "report", rep


def h_verify(exp, par, threads):
    from .verify import verify_all

    s = verify_all(exp["seed"], par["suites"] or None, threads, par["edges"], par["pairs"])
    return "report", {"check": "verify", **s, "verdict": _verdict(s["ok"])}


def sweep_rows(exp, par, threads) -> tuple[list[str], list[dict]]:
    from .groups import FreeGroup, build_ball
    from .percolation import (chi_tree_closed_form, iota_ratio, iota_tree_exact, known_pc, susceptibility,
                              triangle_diagram, triangle_tree_exact)

    pres = _pres(exp)
    grid = parse_grid(_need(exp, "p_grid"))
    mode = par["mode"]
    if mode == "auto":
        mode = "exact" if isinstance(pres, FreeGroup) else "monte_carlo"
    A = _words(par, exp)
    pc = known_pc(pres)
    radius = exp.get("radius", 30)
    rows = []
    ball = None if mode == "exact" else build_ball(pres, radius)
    for p in grid:
        if mode == "exact":
            rank = _free(exp).rank
            chi, chi_se = chi_tree_closed_form(p, rank), 0.0
            io, io_se = iota_tree_exact(p, A, rank, chi=chi), 0.0
            tri, tri_se = float(triangle_tree_exact(p, radius, rank)), 0.0
        else:
            trials = _need(exp, "trials")
            e = susceptibility(ball, p, trials, exp["seed"], threads)
            chi, chi_se = e.value, e.std_error
            e = iota_ratio(ball, p, A, trials, exp["seed"], threads=threads)
            io, io_se = e.value, e.std_error
            e = triangle_diagram(ball, p, trials, exp["seed"], threads)
            tri, tri_se = e.value, e.std_error
        gap = (pc - p) * chi if pc is not None and chi != float("inf") else None
        rows.append({"p": p, "chi": chi, "chi_std_error": chi_se, "pc_gap_chi": gap, "iota": io,
                     "iota_std_error": io_se, "triangle": tri, "triangle_std_error": tri_se})
    col = par["columns"]
    if col == "chain":
        return CSV_COLUMNS["chain"], rows
    key = {"chi": ("chi", "chi_std_error"), "iota": ("iota", "iota_std_error"),
           "triangle": ("triangle", "triangle_std_error"), "pc_gap_chi": ("pc_gap_chi", None)}.get(col)
    if key is None:
        raise UsageError(f"unknown sweep column set '{col}'")
    return CSV_COLUMNS["estimate"], [{"p": r["p"], "value": r[key[0]], "std_error": r[key[1]] if key[1] else 0.0}
                                     for r in rows]


def h_sweep(exp, par, threads):
    cols, rows = sweep_rows(exp, par, threads)
    return "sweep", {"columns": cols, "rows": rows, "verdict": "pass"}


HANDLERS: dict[str, Callable] = {
    "pc": h_pc, "two_point": h_two_point, "susceptibility": h_susceptibility, "triangle": h_triangle,
    "iota": h_iota, "n_infinity": h_n_infinity, "delta": h_delta, "classify": h_classify,
    "supporting": h_supporting, "single_halfspace": h_single, "barrier_vertical": h_barrier_vertical,
    "barrier_projection": h_barrier_projection, "de_barrier": h_de_barrier, "branching": h_branching,
    "capacity": h_capacity, "bk_barrier": h_bk_barrier, "verify": h_verify, "sweep": h_sweep,
}


def execute(config: dict, threads: int | None = None) -> dict:
    """Run a validated config and return its record (raises ``CheckFailed`` on a failed verdict)."""
    exp = dict(config["experiment"])
    par = dict(config["params"])
    from .barriers import VacuousBarrierWarning

    sw = Stopwatch()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        warnings.simplefilter("ignore", VacuousBarrierWarning)  # already listed in the result
        kind, outputs = HANDLERS[exp["quantity"]](exp, par, threads)
    echo = {"experiment": {k: v for k, v in exp.items() if not k.startswith("_") and k not in ("output", "format",
                                                                                                 "threads")},
            "params": par}
    rec = make_record(kind, echo, outputs, sw.ms)
    if outputs.get("verdict") == "fail":
        raise CheckFailed(f"check '{exp['quantity']}' failed", rec)
    return rec


# --------------------------------------------------------------------- CLI


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    c.add_argument("--seed", type=int, default=None, help="random seed (default 0 or the config's seed)")
    c.add_argument("--threads", type=int, default=None, help="worker threads for Monte Carlo kernels")
    c.add_argument("--out", default=None, help="write the result here instead of stdout")
    c.add_argument("--format", choices=("json", "csv"), default=None, help="output format")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = _Parser(prog="hyperperc", description="Percolation and barrier experiments on Cayley graphs.")
    ap.add_argument("--version", action="version", version=f"hyperperc {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="run the experiment described by a TOML config")
    p.add_argument("config", help="TOML config, or a JSON result record to re-run from its config echo")

    p = sub.add_parser("verify", parents=[common], help="run the property suites")
    p.add_argument("suites", nargs="*", help="suite names (default: all)")
    p.add_argument("--edges", type=int, default=10, help="edges per random tiny graph")
    p.add_argument("--pairs", type=int, default=50, help="random event pairs per inequality suite")
    p.add_argument("--inject-fault", choices=("collision",), default=None,
                   help="plant a product collision in the branching witness")
    p.add_argument("--list", action="store_true", help="list suite names and exit")

    p = sub.add_parser("sweep", parents=[common], help="χ, (p_c−p)χ, ι and ∇ over a p-grid")
    p.add_argument("config", nargs="?", help="TOML config with quantity = \"sweep\"")
    p.add_argument("--presentation", default="free:2")
    p.add_argument("--grid", default=None, help="start:stop:step")
    p.add_argument("--set", default="geodesic(a,20)", help="set expression for ι")
    p.add_argument("--radius", type=int, default=30)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--mode", choices=("auto", "exact", "monte_carlo"), default="auto")
    p.add_argument("--columns", default="chain", choices=("chain", "chi", "iota", "triangle", "pc_gap_chi"))

    p = sub.add_parser("ball", parents=[common], help="export a Cayley ball as an edge list")
    p.add_argument("presentation", help="presentation literal, e.g. free:2 or lattice:2")
    p.add_argument("--radius", type=int, required=True)

    p = sub.add_parser("classify", parents=[common], help="magic classifier, supporting hyperplanes")
    p.add_argument("--mode", choices=("magic", "supporting", "single"), default="magic")
    p.add_argument("--set", default=None, help="set expression A")
    p.add_argument("--D", type=int, default=2)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--N", type=float, default=None, help="residual threshold (default 2M/eps)")
    p.add_argument("--separation", type=float, default=None)
    p.add_argument("--radius", type=int, default=None, help="ball radius (certification radius for supporting)")
    p.add_argument("--R", type=int, default=40, help="single mode: number of geodesic steps")
    p.add_argument("--step", type=int, default=10, help="single mode: spacing along the geodesic")
    p.add_argument("--no-strict", action="store_true", help="report failed assertions without exit code 2")

    p = sub.add_parser("barrier", parents=[common], help="build barrier families and check them")
    p.add_argument("kind", choices=("vertical", "projection", "de", "branching", "capacity"))
    p.add_argument("--radius", type=int, default=110)
    p.add_argument("--step", type=int, default=10)
    p.add_argument("--count", type=int, default=9)
    p.add_argument("--y", default=None, help="projection: the point y as a word")
    p.add_argument("--spacing", type=float, default=100.0)
    p.add_argument("--width", type=float, default=25.0)
    p.add_argument("--D", type=int, default=1)
    p.add_argument("--E", type=int, default=6)
    p.add_argument("--E-prime", type=int, default=-1)
    p.add_argument("--branching-kind", choices=("barrier", "nf"), default="barrier")
    p.add_argument("--k-max", type=int, default=3)
    p.add_argument("--base-radius", type=int, default=20)
    p.add_argument("--plant-collision", action="store_true")
    p.add_argument("--p", type=float, default=1 / 3)
    p.add_argument("--export-dir", default=None, help="write each level as a word list with a JSON header")
    return ap


def _set_threads(n):
    if n is None:
        return None
    if n < 1:
        raise UsageError("--threads must be positive")
    import numba

    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


def _emit(rec: dict, fmt: str, out: str | None) -> None:
    text = record_csv(rec) if fmt == "csv" else dumps(rec)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config_from_flags(quantity: str, exp: dict, par: dict) -> dict:
    return validate_config({"experiment": {"quantity": quantity, **exp}, "params": par}, None, "<command line>")


def _cmd_run(a) -> dict:
    cfg = load_config(a.config)
    cfg["experiment"]["_base_dir"] = str(Path(a.config).resolve().parent)
    if a.seed is not None:
        cfg["experiment"]["seed"] = a.seed
    return cfg


def _cmd_sweep(a) -> dict:
    if a.config:
        cfg = load_config(a.config)
        if cfg["experiment"]["quantity"] != "sweep":
            raise UsageError("sweep config must set quantity = \"sweep\"")
        cfg["experiment"]["_base_dir"] = str(Path(a.config).resolve().parent)
        if a.seed is not None:
            cfg["experiment"]["seed"] = a.seed
        return cfg
    if a.grid is None:
        raise UsageError("sweep needs a config file or --grid start:stop:step")
    exp = {"presentation": a.presentation, "p_grid": a.grid, "radius": a.radius, "seed": a.seed or 0}
    if a.trials is not None:
        exp["trials"] = a.trials
    return _config_from_flags("sweep", exp, {"columns": a.columns, "set": a.set, "mode": a.mode})


def _cmd_classify(a) -> dict:
    exp = {"seed": a.seed or 0}
    if a.radius is not None:
        exp["radius"] = a.radius
    if a.mode == "single":
        return _config_from_flags("single_halfspace", exp, {"R": a.R, "D": a.D, "N": int(a.N or 3), "step": a.step})
    if a.set is None:
        raise UsageError("classify needs --set")
    if a.mode == "supporting":
        if a.radius is None:
            raise UsageError("supporting mode needs --radius (the certifying ball)")
        return _config_from_flags("supporting", exp, {"set": a.set, "D": a.D, "eps": a.eps})
    return _config_from_flags("classify", exp, {"set": a.set, "D": a.D, "eps": a.eps, "N": a.N or 0.0,
                                                "separation": a.separation or 0.0, "strict": not a.no_strict})


def _cmd_barrier(a) -> dict:
    exp = {"radius": a.radius, "seed": a.seed or 0}
    if a.kind == "vertical":
        return _config_from_flags("barrier_vertical", exp, {"step": a.step, "count": a.count})
    if a.kind == "projection":
        if a.y is None:
            raise UsageError("projection barriers need --y")
        return _config_from_flags("barrier_projection", exp, {"y": a.y, "spacing": a.spacing, "width": a.width})
    if a.kind == "de":
        return _config_from_flags("de_barrier", exp, {"D": a.D, "E": a.E, "E_prime": a.E_prime})
    if a.kind == "branching":
        return _config_from_flags("branching", exp, {"kind": a.branching_kind, "D": a.D, "k_max": a.k_max,
                                                     "step": a.step, "base_radius": a.base_radius,
                                                     "plant_collision": a.plant_collision})
    return _config_from_flags("capacity", dict(exp, p=a.p), {"step": a.step})


def _export_levels(a) -> None:
    from .barriers import projection_barriers, vertical_barriers
    from .groups import parse_presentation

    if a.kind == "vertical":
        fam = vertical_barriers(a.radius, a.step, a.count)
        ball = None
    elif a.kind == "projection":
        from .groups import build_ball

        ball = build_ball("free:2", a.radius)
        fam = projection_barriers(ball, parse_presentation("free:2").parse(a.y).word, spacing=a.spacing,
                                  width=a.width)
    else:
        raise UsageError("--export-dir applies to vertical and projection families")
    d = Path(a.export_dir)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(fam.count):
        (d / f"{fam.kind}_level{i + 1}.txt").write_text(fam.export_level(i, ball))


def _cmd_ball(a) -> int:
    from .groups import build_ball

    ball = build_ball(a.presentation, a.radius)
    if (a.format or "text") == "json":
        rec = make_record("ball", {"experiment": {"presentation": ball.pres.literal, "radius": a.radius}},
                          {"vertices": ball.n_vertices, "edges": ball.n_edges,
                           "words": [ball.pres.format_word(w) for w in ball.words],
                           "edge_list": ball.edges.tolist()}, 0.0)
        _emit(rec, "json", a.out)
        return EXIT_OK
    if a.format == "csv":
        text = csv_text(["u", "v", "gen"], ({"u": u, "v": v, "gen": g} for u, v, g in ball.edges.tolist()),
                        comment=f"ball {ball.pres.literal} radius {a.radius}")
    else:
        text = ball.export_text()
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_verify(a) -> int:
    from .verify import SUITES, verify_all

    if a.list:
        sys.stdout.write("\n".join(SUITES) + "\n")
        return EXIT_OK
    s = verify_all(a.seed or 0, a.suites or None, a.threads, a.edges, a.pairs, a.inject_fault)
    if a.format == "csv":
        rows = [{"suite": x["name"], "ok": x["ok"], "failures": "; ".join(x["failures"])} for x in s["suites"]]
        text = csv_text(["suite", "ok", "failures"], rows, comment="verify")
    else:
        text = dumps(s)
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)
    for x in s["suites"]:
        if not x["ok"]:
            for f in x["failures"][:5]:
                print(f"FAIL {x['name']}: {f}", file=sys.stderr)
    return EXIT_OK if s["ok"] else EXIT_VIOLATION


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if a.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        threads = _set_threads(a.threads)
        if a.command == "verify":
            return _cmd_verify(a)
        if a.command == "ball":
            return _cmd_ball(a)
        cfg = {"run": _cmd_run, "sweep": _cmd_sweep, "classify": _cmd_classify, "barrier": _cmd_barrier}[a.command](a)
        exp = cfg["experiment"]
        threads = threads if threads is not None else _set_threads(exp.get("threads"))
        fmt = a.format or exp.get("format") or ("csv" if exp["quantity"] == "sweep" else "json")
        out = a.out or exp.get("output")
        try:
            rec = execute(cfg, threads)
            code = EXIT_OK
        except CheckFailed as exc:
            rec, code = exc.record, EXIT_VIOLATION
            print(f"check failed: {exc}", file=sys.stderr)
        _emit(rec, fmt, out)
        if a.command == "barrier" and a.export_dir:
            _export_levels(a)
        return code
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RejectedInputError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PropertyViolation as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


def _entry() -> Any:
    sys.exit(main())
