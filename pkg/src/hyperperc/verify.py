"""The property-suite driver behind ``hyperperc verify``.

Each suite is a function ``(ctx) -> SuiteResult`` that runs a fixed batch of
checks at desk scale.  Suites are deterministic given the seed, and the
summary omits timings so two runs with the same seed serialise identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

SUMMARY_SCHEMA = "hyperperc.verify/1"


@dataclass
class VerifyContext:
    seed: int = 0
    threads: int | None = None
    edges: int = 10
    pairs: int = 50
    inject_fault: str | None = None

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])


@dataclass
class SuiteResult:
    name: str
    checks: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def check(self, label: str, ok: bool, detail=None) -> bool:
        ok = bool(ok)
        self.checks[label] = ok
        if not ok:
            self.failures.append(label if detail is None else f"{label}: {detail}")
        return ok

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"name": self.name, "ok": self.ok, "checks": self.checks, "failures": self.failures,
                "info": self.info}


SUITES: dict[str, Callable[[VerifyContext], SuiteResult]] = {}


def suite(name: str):
    def deco(fn):
        SUITES[name] = fn
        return fn

    return deco


# ------------------------------------------------------------------ suites


@suite("group_core")
def _group_core(ctx):
    from .groups import build_ball, parse_presentation, reduce, word_distance

    r = SuiteResult("group_core")
    f2 = parse_presentation("free:2")
    r.check("cancellation", reduce([1, -1, 2], f2).word == (2,))
    r.check("relator_collapse", reduce([1, 1, 2, 2, 2], parse_presentation("freeprod:2,3")).norm == 0)
    r.check("distance_F2", word_distance(f2.identity(), f2.parse("aaba")) == 4)
    z2 = parse_presentation("lattice:2")
    r.check("distance_Z2", word_distance(z2.identity(), z2.element([1, 1, 1, -2, -2])) == 5)
    b = build_ball(f2, 6)
    sizes = np.bincount(b.norms)
    r.check("sphere_sizes", all(sizes[n] == 4 * 3 ** (n - 1) for n in range(1, 7)), sizes.tolist())
    r.check("ball2_counts", (build_ball(f2, 2).n_vertices, build_ball(f2, 2).n_edges) == (17, 16))
    r.check("identity_first", b.norms[0] == 0 and b.words[0] == ())
    for lit in ("lattice:2", "freeprod:2,3", "product(free:1,lattice:1)"):
        bb = build_ball(lit, 4)
        pairs = {(int(u), int(v)) for u, v, _ in bb.edges}
        r.check(f"edges_unique[{lit}]", len(pairs) == bb.n_edges)
        mult_ok = all(bb.pres.mul_words(bb.words[u], bb.pres.reduce_letters((bb.pres.letters[g],))) == bb.words[v]
                      for u, v, g in bb.edges.tolist())
        r.check(f"edge_labels[{lit}]", mult_ok)
    return r


@suite("rng")
def _rng(ctx):
    from .rng import py_splitmix64, splitmix64, uniforms

    r = SuiteResult("rng")
    xs = [0, 1, 2**63, 0xDEADBEEF, 2**64 - 1]
    r.check("splitmix_reference", all(int(splitmix64(np.uint64(x))) == py_splitmix64(x) for x in xs))
    keys = np.arange(1000, dtype=np.uint64)
    u1, u2 = uniforms(np.uint64(ctx.seed), keys), uniforms(np.uint64(ctx.seed), keys)
    r.check("deterministic", np.array_equal(u1, u2))
    r.check("unit_interval", bool(((u1 >= 0) & (u1 < 1)).all()))
    return r


@suite("two_point_tree")
def _two_point(ctx):
    from .groups import build_ball
    from .percolation import two_point_all

    r = SuiteResult("two_point_tree")
    b = build_ball("free:2", 6)
    for p in (0.1, 0.2, 0.3):
        tau, se = two_point_all(b, p, 4000, ctx.seed, ctx.threads)
        worst = 0.0
        for n in range(0, 5):
            idx = b.sphere(n)
            m = float(tau[idx].mean())
            s = float(np.sqrt((se[idx] ** 2).sum()) / idx.size) if idx.size > 1 else float(se[idx][0])
            z = abs(m - p**n) / s if s > 0 else (0.0 if m == p**n else math.inf)
            worst = max(worst, z)
        r.info[f"max_z[p={p}]"] = round(worst, 3)
        r.check(f"tau_p_power[p={p}]", worst <= 3.0, worst)
    return r


@suite("susceptibility_tree")
def _chi(ctx):
    from .groups import tree_ball
    from .percolation import chi_tree_truncated, susceptibility

    r = SuiteResult("susceptibility_tree")
    tb = tree_ball("free:2", 20)
    for p in (0.2, 0.25):
        est = susceptibility(tb, p, 4000, ctx.seed, ctx.threads)
        exact = chi_tree_truncated(p, 20)
        r.info[f"chi[p={p}]"] = [est.value, est.std_error, exact]
        r.check(f"chi_matches_series[p={p}]", est.within(exact, 3.0), (est.value, est.std_error, exact))
    return r


@suite("pc_curve")
def _pc(ctx):
    from .percolation import pc_estimate

    r = SuiteResult("pc_curve")
    est = pc_estimate("free:2", 10, 4000, ctx.seed, threads=ctx.threads)
    curve = [f for _, f, _ in est.meta["curve"]]
    r.check("curve_monotone", all(a <= b for a, b in zip(curve, curve[1:])))
    r.check("curve_endpoints", curve[0] == 0.0 and curve[-1] == 1.0)
    r.check("crossing_above_tree_pc", est.value > 1 / 3, est.value)
    r.info["crossing_radius10"] = est.value
    return r


@suite("triangle")
def _triangle(ctx):
    from .percolation import triangle_tree_exact

    r = SuiteResult("triangle")
    pc = 1 / 3
    t25, t30 = triangle_tree_exact(pc, 25), triangle_tree_exact(pc, 30)
    r.info["triangle_r30"] = t30
    r.check("converged_25_30", abs(t30 - t25) < 1e-4, abs(t30 - t25))
    fr = float(triangle_tree_exact(Fraction(1, 3), 8))
    r.check("fraction_agrees", abs(fr - triangle_tree_exact(pc, 8)) < 1e-12)
    return r


@suite("iota")
def _iota(ctx):
    from .percolation import iota_sphere_exact, iota_tree_exact
    from .sets import parse_set

    r = SuiteResult("iota")
    vals = [iota_sphere_exact(0.3, k) for k in range(1, 9)]
    r.check("sphere_decreasing", all(a > b for a, b in zip(vals, vals[1:])), vals)
    r.check("sphere_closed_sum", abs(iota_tree_exact(0.3, parse_set("sphere(3)")) - vals[2]) < 1e-12)
    geo = iota_tree_exact(0.3, parse_set("geodesic(a,20)"))
    r.info["geodesic_over_sphere3"] = geo / vals[2]
    r.check("geodesic_above_sphere", geo > vals[2])
    return r


def _random_events(ctx, salt):
    from .exact import Connect, random_tiny_graph

    rng = ctx.rng(salt)
    n_edges = ctx.edges
    out = []
    for _ in range(ctx.pairs):
        nv = int(rng.integers(max(3, math.ceil((1 + math.sqrt(1 + 8 * n_edges)) / 2)), n_edges + 2))
        g = random_tiny_graph(rng, nv, n_edges)
        u, v, w, x = (int(t) for t in rng.choice(nv, 4, replace=nv < 4))
        if u == v:
            v = (u + 1) % nv
        if w == x:
            x = (w + 1) % nv
        out.append((g, Connect(u, v), Connect(w, x)))
    return out


@suite("fkg")
def _fkg(ctx):
    from .exact import check_fkg

    r = SuiteResult("fkg")
    worst = math.inf
    for g, a, b in _random_events(ctx, 11):
        for rep in check_fkg(g, a, b, [0.2, 0.5, 0.8]):
            worst = min(worst, rep["margin"])
            r.check(f"{rep['graph_hash']}:{a.u}-{a.v}|{b.u}-{b.v}@{rep['p']}", rep["verdict"] == "pass", rep["margin"])
    r.info.update(instances=ctx.pairs, edges=ctx.edges, min_margin=worst)
    r.checks = {"all_margins_nonnegative": not r.failures}
    return r


@suite("bk")
def _bk(ctx):
    from .exact import Connect, check_bk

    r = SuiteResult("bk")
    worst = -math.inf
    for g, a, _ in _random_events(ctx, 12):
        b = Connect(a.v, (a.v + 1) % g.n_vertices)
        for rep in check_bk(g, a, b, [0.2, 0.5, 0.8]):
            worst = max(worst, rep["margin"])
            r.check(f"{rep['graph_hash']}@{rep['p']}", rep["verdict"] == "pass", rep["margin"])
    r.info.update(instances=ctx.pairs, edges=ctx.edges, max_margin=worst)
    r.checks = {"all_margins_nonpositive": not r.failures}
    return r


@suite("russo")
def _russo(ctx):
    from .exact import Connect, random_tiny_graph, russo_check

    r = SuiteResult("russo")
    rng = ctx.rng(13)
    orders = []
    for _ in range(6):
        g = random_tiny_graph(rng, 6, 9)
        rep = russo_check(g, Connect(0, 5), 0.5, 0.001, halvings=2)
        orders.extend(rep["orders"])
        r.check(f"{rep['graph_hash']}", rep["verdict"] == "pass", rep["margin"])
    r.info["orders"] = [round(o, 4) for o in orders]
    r.check("order_two", all(1.8 <= o <= 2.2 for o in orders), orders)
    return r


@suite("disjoint_figure")
def _figure(ctx):
    from .exact import Connect, figure_configurations, in_disjoint_occurrence

    r = SuiteResult("disjoint_figure")
    g, u, v, w, left, right = figure_configurations()
    a, b = Connect(u, v), Connect(v, w)
    r.check("left_in", in_disjoint_occurrence(g, left, a, b))
    r.check("right_not_in", not in_disjoint_occurrence(g, right, a, b))
    return r


@suite("delta")
def _delta(ctx):
    from .geometry import FiniteMetric, delta_details
    from .groups import build_ball

    r = SuiteResult("delta")
    d = delta_details(FiniteMetric.from_ball(build_ball("free:2", 4)))
    r.check("tree_ball4_zero", d["delta"] == 0.0, d)
    r.check("four_cycle_half", delta_details(FiniteMetric.from_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)]))["delta"] == 0.5)
    return r


@suite("projection")
def _projection(ctx):
    from .geometry import (check_fellow_traveller, check_gromov_inequality, check_projection_corollary,
                           check_projection_lemma, check_stability)

    r = SuiteResult("projection")
    rng = ctx.rng(14)
    for item, bad in check_projection_corollary(rng, 300).items():
        r.check(f"corollary_{item}", not bad, bad[:3])
    r.check("projection_lemma", not check_projection_lemma(rng, 200))
    r.check("fellow_traveller", not check_fellow_traveller(rng, 200))
    r.check("gromov_inequality", not check_gromov_inequality(rng, 200))
    r.check("stability", not check_stability(rng, 100))
    return r


@suite("gromov_example")
def _gromov(ctx):
    from .geometry import tree_gromov
    from .groups import parse_presentation

    r = SuiteResult("gromov_example")
    f2 = parse_presentation("free:2")
    y, z = f2.parse("aaba").word, f2.parse("aaBab").word
    r.check("aaba_aaBab_is_2", tree_gromov((), y, z) == 2)
    return r


@suite("magic")
def _magic(ctx):
    from .magic import magic_classify, single_halfspace_failure
    from .sets import parse_set

    r = SuiteResult("magic")
    A = parse_set("ball(4)")
    c = magic_classify(10, A, 1, 0.5, strict=False)
    for k, v in c.assertions.items():
        r.check(f"ball4_{k}", v["ok"], v["detail"])
    r.check("ball4_accepted_fraction", len(c.accepted) >= 0.5 * len(A))
    sparse = parse_set("union(geodesic(a,30,10),geodesic(b,30,10),geodesic(A,30,10),geodesic(B,30,10))")
    c2 = magic_classify(310, sparse, 1, 0.5, N=3, separation=100, strict=False)
    for k, v in c2.assertions.items():
        r.check(f"sparse_{k}", v["ok"], v["detail"])
    r.info["sparse_summary"] = {k: v for k, v in c2.summary().items() if k != "assertions"}
    fr = [single_halfspace_failure(10 * R + 12, R, 2, 3) for R in (1, 5, 10, 20, 40)]
    r.info["single_halfspace_fraction"] = fr
    r.check("single_halfspace_nonincreasing", all(a >= b for a, b in zip(fr, fr[1:])), fr)
    r.check("single_halfspace_R1", fr[0] == 1.0)
    return r


@suite("supporting")
def _supporting(ctx):
    from .groups import build_ball
    from .magic import supporting_hyperplane
    from .sets import parse_set

    r = SuiteResult("supporting")
    A = parse_set("ball(3)")
    rep = supporting_hyperplane(build_ball("free:2", 10), A, 2, 0.5)
    r.check("half_found", rep.found >= math.ceil(0.5 * len(A)), rep.found)
    r.check("all_contain_A", all(w.contains_A for w in rep.witnesses))
    r.check("translates_disjoint", all(w.disjoint_on_ball for w in rep.witnesses))
    r.info["found"] = rep.found
    return r


@suite("barriers")
def _barriers(ctx):
    from .barriers import compare_vertical_projection, is_barrier, vertical_barriers
    from .groups import build_ball

    r = SuiteResult("barriers")
    fam = vertical_barriers(40, 5, 6)
    r.check("vertical_disjoint", fam.pairwise_disjoint())
    res = fam.verify()
    r.check("vertical_levels_block", all(x.ok for x in res), [x.ok for x in res])
    b = build_ball("free:2", 8)
    small = vertical_barriers(b, 2, 3)
    bfs = [x.ok for x in small.verify(b)]
    tree = [x.ok for x in small.verify()]
    r.check("bfs_agrees_with_tree", bfs == tree and all(bfs), (bfs, tree))
    ok, path = is_barrier(b, [], 0, b.sphere(8))
    r.check("empty_barrier_fails", not ok and path is not None and len(path) == 9)
    ok, _ = is_barrier(b, b.sphere(3), 0, b.sphere(6))
    r.check("sphere_separates", ok)
    rows = compare_vertical_projection(40, 10, 3)
    r.check("vertical_within_projection", all(x["vertical_subset"] for x in rows), rows)
    return r


@suite("branching")
def _branching(ctx):
    from .barriers import (check_roughly_branching, f_image_witness, nf_set, plant_collision, reproduce_collision,
                           vertical_barriers)
    from .groups import build_ball

    r = SuiteResult("branching")
    B = vertical_barriers(20, 10, 1).levels[0]
    Bp, rad = f_image_witness(B, 1)
    if ctx.inject_fault == "collision":
        Bp = plant_collision(Bp)
    cert = check_roughly_branching(B, Bp, rad, 3)
    coll = cert.collision_words()
    r.check("vertical_F_image", cert.ok,
            None if cert.ok else f"collision at k={coll[0]['k']}: {coll[0]['first']} vs {coll[0]['second']}"
            if coll else f"uncovered {len(cert.uncovered)}")
    if cert.collisions:
        k, s1, s2, _ = cert.collisions[0]
        r.info["collision_reproduces"] = reproduce_collision(cert.witness, s1, s2)
    nf = nf_set(build_ball("free:2", 3), 2)
    Bp2, rad2 = f_image_witness(nf, 2, "nf")
    cert2 = check_roughly_branching(nf, Bp2, rad2, 3)
    r.check("nf_F_image", cert2.ok)
    r.check("free_basis", check_roughly_branching([(1,), (2,)], [(1,), (2,)], 0, 4).ok)
    r.check("commuting_pair_fails", not check_roughly_branching([(1,)], [(1,), (1, 1)], 0, 2).injective)
    return r


@suite("capacity")
def _capacity(ctx):
    from .barriers import branching_capacity, nested_capacity, vertical_barriers, vertical_capacity_closed_form

    r = SuiteResult("capacity")
    fam = vertical_barriers(110, 10, 9)
    cap = branching_capacity(110, fam.levels[0], 1 / 3)["capacity"]
    r.check("closed_form_1e-12", abs(cap - vertical_capacity_closed_form(1 / 3, 10)) <= 1e-12)
    r.check("two_thirds_power", abs(cap - 2 * 3.0**-10) <= 1e-12)
    r.check("at_most_one", cap <= 1)
    r.check("nested_min_le_mean", nested_capacity(fam, 0.3)["holds"])
    grid = [branching_capacity(110, fam.levels[0], p)["capacity"] for p in np.linspace(0.05, 1 / 3, 8)]
    r.check("monotone_in_p", all(a < b for a, b in zip(grid, grid[1:])))
    return r


@suite("de_barrier")
def _de(ctx):
    from .barriers import de_barrier_check

    r = SuiteResult("de_barrier")
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = de_barrier_check(320, 1, 6)
    r.check("nf300_blocks_gde", rep["ok"])
    r.info["explored"] = rep["result"]["explored"]
    return r


@suite("bk_barrier")
def _bk_barrier(ctx):
    from .barriers import Cone, vertical_barriers
    from .exact import bk_barrier_check
    from .groups import build_ball

    r = SuiteResult("bk_barrier")
    b = build_ball("free:2", 8)
    B = vertical_barriers(b, 3, 1).levels[0].members(b)
    A = [w for w in b.words if Cone((1,) * 6).contains(w)]
    for p in (0.2, 0.3):
        rep = bk_barrier_check(b, A, B, p)
        r.check(f"exact[p={p}]", rep["verdict"] == "pass", rep["margin"])
    return r


# ------------------------------------------------------------------ driver


def verify_all(seed: int = 0, names=None, threads=None, edges: int = 10, pairs: int = 50,
               inject_fault: str | None = None) -> dict:
    """Run the named suites (all by default) and return the summary dict."""
    ctx = VerifyContext(seed=seed, threads=threads, edges=edges, pairs=pairs, inject_fault=inject_fault)
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        from .errors import RejectedInputError

        raise RejectedInputError(f"unknown suite(s) {unknown}; available: {sorted(SUITES)}")
    results = []
    for n in names:
        try:
            res = SUITES[n](ctx)
        except Exception as exc:  # a crashing suite is a failed suite
            res = SuiteResult(n)
            res.check("completed", False, f"{type(exc).__name__}: {exc}")
        results.append(res.to_json())
    failed = [x["name"] for x in results if not x["ok"]]
    return {"schema": SUMMARY_SCHEMA, "seed": seed, "inject_fault": inject_fault,
            "suites": results, "n_suites": len(results), "failed": failed, "ok": not failed}
