"""Constructive halfspace-selection procedures on the free group's tree.

Two procedures live here.  ``magic_classify`` takes a finite set A in F_k and
finds, for all but an ε-fraction of its elements, two halfspaces rooted at the
element whose union misses at most N points of A; the bad/undecided/good loop
that bounds the exceptions is executed literally and every bookkeeping claim
it relies on is asserted on the data.  ``supporting_hyperplane`` finds, for an
element a, a nearby centre c such that the metric halfspace of c against
c·a^D contains A, together with a translate disjoint from it.

Everything is specialised to the Cayley tree with base point id, so the
geometry is exact: geodesics are unique, Gromov products are integers, and
all slack terms proportional to δ vanish.  The remaining structural constants
are collected in ``CONSTANTS`` (multiples of D).

Boundary conventions: halfspaces use ``(z|y)_x ≥ D``; proximity conditions
use ``≤``; the exclusion ball around the root is closed, so anti-halfspace
members satisfy ``d(x,z) > 6D``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba as nb
import numpy as np

from .errors import PropertyViolation, RejectedInputError
from .geometry import finv, fmul, tree_dist, tree_gromov, word_lcp_rows
from .groups import CayleyBall, FreeGroup, GroupElement, TreeBall, format_free_word, letter_code

CONSTANTS = {
    "exclusion_radius": 6,  # anti-halfspace members lie outside the closed 6D-ball around the root
    "proximity": 1,  # the witness geodesic passes within D of the root
    "end_tolerance": 1,  # and ends within D of the member
    "separation": 100,  # problematic elements are thinned to a 100D-separated set
    "occupancy_radius": 100,  # M counts points of Y in closed 100D-balls
    "delta_slack": 0,  # every +cδ term of the hyperbolic statement
}

# Supporting-hyperplane constants in F_2 with f = a, w = b: K0 = 1 (distinct
# cosets of <a> have projections of diameter 0 onto each other), K1 = 1 (the
# choice of W makes the Gromov product exactly 0), δ = 0.
K0_FREE = 1
K1_FREE = 1
D0_FORMULA = 10**4 * (K1_FREE + K0_FREE + 0 + 1)

Word = tuple


# ----------------------------------------------------------------- inputs


def canonical_key(w: Sequence[int]) -> tuple:
    return (len(w), tuple(letter_code(x) for x in w))


def _as_words(ball, A) -> list[Word]:
    out = []
    for g in A:
        if isinstance(g, GroupElement):
            out.append(tuple(g.word))
        elif isinstance(g, (int, np.integer)):
            if not isinstance(ball, CayleyBall):
                raise RejectedInputError("vertex indices need an explicit CayleyBall")
            out.append(ball.words[int(g)])
        else:
            out.append(tuple(int(x) for x in g))
    return out


def _ball_radius(ball) -> tuple[int, FreeGroup]:
    if isinstance(ball, (CayleyBall, TreeBall)):
        if not isinstance(ball.pres, FreeGroup):
            raise RejectedInputError("the classifier works on free groups only")
        return ball.radius, ball.pres
    if isinstance(ball, (int, np.integer)):
        return int(ball), FreeGroup(2)
    raise RejectedInputError(f"expected a ball or a radius, got {type(ball).__name__}")


def _dedupe_sorted(words: Iterable[Word]) -> list[Word]:
    return sorted(set(words), key=canonical_key)


def word_matrix(words: Sequence[Word], width: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    lens = np.array([len(w) for w in words], dtype=np.int64)
    width = max(int(lens.max()) if lens.size else 0, 1) if width is None else max(width, 1)
    wm = np.zeros((len(words), width), dtype=np.int8)
    for i, w in enumerate(words):
        wm[i, : len(w)] = w
    return wm, lens


def _dist_to(wm, lens, word) -> np.ndarray:
    return lens + len(word) - 2 * word_lcp_rows(wm, word)


# ---------------------------------------------------------- anti-halfspace


def is_anti_member(x: Word, y: Word, z: Word, D: float) -> bool:
    """z ∈ 𝔄_D(x, y) on the tree: d(x,z) > 6D and (y|z)_x ≤ D.

    A geodesic from y ending within D of z passes within D of x exactly when
    the geodesic [y, z] itself does, because shifting the endpoint by at most
    D towards x cannot bring the path closer once z is 6D away.
    """
    return tree_dist(x, z) > CONSTANTS["exclusion_radius"] * D and tree_gromov(x, y, z) <= CONSTANTS["proximity"] * D


@dataclass
class AntiHalfspace:
    """𝔄_D(x, y): points beyond x as seen from y, at least 6D away from x."""

    x: Word
    y: Word
    D: float
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.x, self.y = tuple(self.x), tuple(self.y)
        if self.D <= 0:
            raise RejectedInputError("D must be positive")

    def contains(self, z) -> bool:
        z = tuple(z)
        if z not in self._cache:
            self._cache[z] = is_anti_member(self.x, self.y, z, self.D)
        return self._cache[z]

    def witness(self, z) -> tuple[int, int]:
        """Timings (τ₁, τ) along the geodesic from y to z: τ₁ is where it passes x."""
        z = tuple(z)
        if not self.contains(z):
            raise RejectedInputError("not a member")
        return tree_gromov(self.y, self.x, z), tree_dist(self.y, z)

    def members(self, ball: CayleyBall) -> np.ndarray:
        return anti_halfspace_members(ball, self.x, self.y, self.D)


def anti_halfspace_members(ball, x, y, D: float, candidates=None) -> np.ndarray | list:
    """Members of 𝔄_D(x, y) inside a free-group ball (indices) or among ``candidates`` (words)."""
    if D <= 0:
        raise RejectedInputError("D must be positive")
    x = tuple(x.word) if isinstance(x, GroupElement) else tuple(x)
    y = tuple(y.word) if isinstance(y, GroupElement) else tuple(y)
    if candidates is not None:
        return [tuple(z) for z in candidates if is_anti_member(x, y, tuple(z), D)]
    if not isinstance(ball, CayleyBall) or not isinstance(ball.pres, FreeGroup):
        raise RejectedInputError("anti_halfspace_members needs an explicit free-group ball or candidates")
    dx = _dist_to(ball.word_matrix, ball.norms, x)
    dy = _dist_to(ball.word_matrix, ball.norms, y)
    dxy = tree_dist(x, y)
    twice_prod = dx + dxy - dy  # 2 (y|z)_x
    keep = (dx > CONSTANTS["exclusion_radius"] * D) & (twice_prod <= 2 * CONSTANTS["proximity"] * D)
    return np.flatnonzero(keep)


# ------------------------------------------------------- separated subsets


def separated_subset(A, r: float, dist=None) -> list:
    """Greedy maximal r-separated subset (pairwise distance ≥ r) in canonical order.

    Elements may be words, ``GroupElement``s or arbitrary points when ``dist``
    is given.  The output keeps the canonical order.
    """
    if dist is None:
        items = _dedupe_sorted(_as_words(None, A))
        dist = tree_dist
    else:
        items = list(dict.fromkeys(A))
    chosen: list = []
    for z in items:
        if all(dist(z, c) >= r for c in chosen):
            chosen.append(z)
    return chosen


# ------------------------------------------------------ residual counting


def _direction_base(rank: int) -> int:
    return 2 * rank + 1


@nb.njit(cache=True)
def _branch_code(wm, lens, i, j, k, D, base):
    # code of the first D letters of a_i^{-1} z_j, where k = lcp(a_i, z_j)
    la = lens[i]
    code = 0
    mult = 1
    for t in range(D):
        if t < la - k:
            letter = -wm[i, la - 1 - t]
        else:
            letter = wm[j, k + t - (la - k)]
        c = 2 * (abs(letter) - 1) + (1 if letter > 0 else 2)
        code += c * mult
        mult *= base
    return code


@nb.njit(cache=True, parallel=True)
def _residual_kernel(wm, lens, D, base, table_size, nchunks):
    n = wm.shape[0]
    res2 = np.zeros(n, dtype=np.int64)
    res1 = np.zeros(n, dtype=np.int64)
    best1 = np.full(n, -1, dtype=np.int64)
    best2 = np.full(n, -1, dtype=np.int64)
    for c in nb.prange(nchunks):
        counts = np.zeros(table_size, dtype=np.int64)
        touched = np.empty(n, dtype=np.int64)
        for i in range(c, n, nchunks):
            nt = 0
            la = lens[i]
            for j in range(n):
                lz = lens[j]
                m = min(la, lz)
                k = 0
                while k < m and wm[i, k] == wm[j, k]:
                    k += 1
                if la + lz - 2 * k < D:
                    continue
                code = _branch_code(wm, lens, i, j, k, D, base)
                if counts[code] == 0:
                    touched[nt] = code
                    nt += 1
                counts[code] += 1
            t1, t2, c1, c2 = 0, 0, -1, -1
            for q in range(nt):
                code = touched[q]
                v = counts[code]
                if v > t1 or (v == t1 and code < c1):
                    t2, c2 = t1, c1
                    t1, c1 = v, code
                elif v > t2 or (v == t2 and code < c2):
                    t2, c2 = v, code
                counts[code] = 0
            res1[i] = n - t1
            res2[i] = n - t1 - t2
            best1[i] = c1
            best2[i] = c2
    return res1, res2, best1, best2


def _decode_direction(code: int, D: int, base: int) -> Word:
    out = []
    for _ in range(D):
        c = code % base
        code //= base
        gen = (c - 1) // 2 + 1
        out.append(gen if c % 2 == 1 else -gen)
    return tuple(out)


def _threads() -> int:
    return max(1, nb.get_num_threads())


@dataclass(frozen=True)
class ResidualReport:
    """Smallest number of points of A left outside one or two D-halfspaces rooted at a."""

    element: Word
    one: int  # min over single halfspaces
    two: int  # min over pairs
    directions: tuple  # points a·u (|u| = D) whose halfspaces realise ``two``


def halfspace_residuals(A, D: int, rank: int = 2) -> list[ResidualReport]:
    """Exact residual counts for every element of A.

    In the tree the halfspaces ℋ_D(a, ·) with nonempty intersection with A are
    the cones through the points at distance D from a, and they are pairwise
    disjoint, so the best pair is the two most populated cones.
    """
    words = _dedupe_sorted(_as_words(None, A))
    D = int(D)
    if D < 1:
        raise RejectedInputError("D must be a positive integer on the tree")
    base = _direction_base(rank)
    table = base**D
    if table > 1 << 24:
        raise RejectedInputError(f"D={D} is too large for exact residual tables")
    wm, lens = word_matrix(words)
    res1, res2, b1, b2 = _residual_kernel(wm, lens, D, base, table, _threads())
    out = []
    for i, w in enumerate(words):
        dirs = tuple(fmul(w, _decode_direction(int(c), D, base)) for c in (b1[i], b2[i]) if c >= 0)
        out.append(ResidualReport(w, int(res1[i]), int(res2[i]), dirs))
    return out


def halfspace_residual(A, a, y, D: float) -> int:
    """#(A ∖ ℋ_D(a, y)) for a single halfspace."""
    a, y = tuple(a), tuple(y)
    words = _dedupe_sorted(_as_words(None, A))
    wm, lens = word_matrix(words)
    twice = _dist_to(wm, lens, a) + tree_dist(a, y) - _dist_to(wm, lens, y)  # 2 (z|y)_a
    return int(np.count_nonzero(twice < 2 * D))


@nb.njit(cache=True, parallel=True)
def _occupancy_kernel(wm, lens, r):
    n = wm.shape[0]
    out = np.zeros(n, dtype=np.int64)
    for i in nb.prange(n):
        cnt = 0
        for j in range(n):
            m = min(lens[i], lens[j])
            k = 0
            while k < m and wm[i, k] == wm[j, k]:
                k += 1
            if lens[i] + lens[j] - 2 * k <= r:
                cnt += 1
        out[i] = cnt
    return out


def occupancy(Y, r: float) -> int:
    """M = max over y ∈ Y of #(closed r-ball around y ∩ Y)."""
    words = _dedupe_sorted(_as_words(None, Y))
    if not words:
        return 0
    wm, lens = word_matrix(words)
    if 2 * int(lens.max()) <= r:
        return len(words)
    return int(_occupancy_kernel(wm, lens, float(r)).max())


# --------------------------------------------------------------- classifier


@dataclass
class GoodWitness:
    element: Word
    b: Word  # the second halfspace points at b (b = id means both coincide)
    halfspaces: tuple  # ((root, towards), (root, towards))
    K: list  # indices into Classification.A of K_i ∩ A
    K_ball_size: int | None = None


@dataclass
class Classification:
    A: list
    D: int
    eps: float
    M: int
    N: float
    separation: float
    accepted: list
    problematic: list
    separated: list
    good: list
    bad: list
    residuals: dict
    witnesses: list
    bad_witnesses: list
    events: list
    assertions: dict

    @property
    def ok(self) -> bool:
        return all(v["ok"] for v in self.assertions.values())

    def summary(self) -> dict:
        return {
            "A": len(self.A),
            "accepted": len(self.accepted),
            "problematic": len(self.problematic),
            "separated": len(self.separated),
            "good": len(self.good),
            "bad": len(self.bad),
            "M": self.M,
            "N": self.N,
            "D": self.D,
            "eps": self.eps,
            "separation": self.separation,
            "max_accepted_residual": max((self.residuals[w].two for w in self.accepted), default=0),
            "assertions": {k: v["ok"] for k, v in self.assertions.items()},
        }

    def to_json(self) -> dict:
        fmt = format_free_word
        out = self.summary()
        out["accepted_words"] = [fmt(w) for w in self.accepted]
        out["problematic_words"] = [fmt(w) for w in self.problematic]
        out["good_words"] = [fmt(w) for w in self.good]
        out["bad_words"] = [fmt(w) for w in self.bad]
        out["witnesses"] = [
            {
                "a": fmt(g.element),
                "b": fmt(g.b),
                "halfspaces": [[fmt(r), fmt(t)] for r, t in g.halfspaces],
                "K_size": len(g.K),
                "K_ball_size": g.K_ball_size,
            }
            for g in self.witnesses
        ]
        out["bad_witnesses"] = [{"a": fmt(a), "b": fmt(b), "c": fmt(c)} for a, b, c in self.bad_witnesses]
        out["residuals"] = [
            {"a": fmt(w), "two": r.two, "one": r.one, "towards": [fmt(d) for d in r.directions]}
            for w, r in self.residuals.items()
            if w in set(self.accepted)
        ]
        out["events"] = [[i, fmt(w), act] for i, w, act in self.events]
        out["assertion_details"] = self.assertions
        return out


def _check(assertions: dict, name: str, ok: bool, detail) -> None:
    prev = assertions.get(name)
    if prev is None:
        assertions[name] = {"ok": bool(ok), "detail": detail}
    elif prev["ok"] and not ok:
        assertions[name] = {"ok": False, "detail": detail}


def magic_classify(ball, A, D: int, eps: float, N: float | None = None, separation: float | None = None,
                   strict: bool = True) -> Classification:
    """Split A into accepted elements and the problematic remainder.

    ``N`` defaults to 2M/ε with M the closed ``separation``-ball occupancy of
    A (taking Y = A); ``separation`` defaults to 100D.  Passing smaller values
    exercises the loop on sets that fit in memory; the ε-bound is then
    re-derived from the actual N.  With ``strict`` any failed bookkeeping
    assertion raises ``PropertyViolation``.
    """
    radius, pres = _ball_radius(ball)
    if D < 1 or int(D) != D:
        raise RejectedInputError("D must be a positive integer")
    if not 0 < eps <= 1:
        raise RejectedInputError("eps must lie in (0, 1]")
    D = int(D)
    words = _dedupe_sorted(_as_words(ball, A))
    if not words:
        raise RejectedInputError("A is empty")
    max_norm = max(len(w) for w in words)
    if radius < max_norm + CONSTANTS["exclusion_radius"] * D:
        raise RejectedInputError(
            f"ball radius {radius} is below max norm {max_norm} + 6D = {max_norm + 6 * D}; halfspace membership "
            "is not decidable inside it"
        )
    separation = CONSTANTS["separation"] * D if separation is None else float(separation)
    M = occupancy(words, separation)
    N = 2 * M / eps if N is None else float(N)
    index = {w: i for i, w in enumerate(words)}

    reports = {r.element: r for r in halfspace_residuals(words, D, pres.rank)}
    accepted = [w for w in words if reports[w].two <= N]
    problematic = [w for w in words if reports[w].two > N]
    separated = separated_subset(problematic, separation)

    assertions: dict = {}
    events: list = []
    x0: Word = ()
    status: dict[Word, str] = {}
    undecided: set[Word] = set()
    good, bad, bad_witnesses, b_of = [], [], [], {}
    used_bc: set[Word] = set()
    for i, a in enumerate(separated):
        if a in status:
            raise PropertyViolation(f"{format_free_word(a)} classified twice")
        anti_i = [z for z in separated if is_anti_member(a, x0, z, D)]
        if not anti_i:
            verdict, b_of[a] = "G", x0
        else:
            b = anti_i[0]  # canonical order = distance from x0, then lexicographic
            b_of[a] = b
            anti_both = [z for z in anti_i if is_anti_member(a, b, z, D)]
            if not anti_both:
                verdict = "G"
            else:
                c = anti_both[0]
                verdict = "B"
                for z in (b, c):
                    _check(assertions, "later_elements_only", z not in status and index[z] != index[a],
                           f"step {i}: {format_free_word(z)} was already classified")
                    _check(assertions, "distance_gain", len(z) >= len(a) + D,
                           f"step {i}: |{format_free_word(z)}| < |a| + D")
                _check(assertions, "unredundancy", b != c and not ({b, c} & used_bc),
                       f"step {i}: witnesses reused")
                used_bc |= {b, c}
                undecided |= {b, c}
                bad_witnesses.append((a, b, c))
                events.append((i, b, "U"))
                events.append((i, c, "U"))
        status[a] = verdict
        undecided.discard(a)
        (good if verdict == "G" else bad).append(a)
        events.append((i, a, verdict))
        _check(assertions, "balance", len(bad) <= len(undecided) + len(good),
               f"step {i}: |B|={len(bad)} > |U|+|G|={len(undecided) + len(good)}")
    _check(assertions, "undecided_empty", not undecided, f"{len(undecided)} undecided left")
    _check(assertions, "bad_le_good", len(bad) <= len(good), f"|B|={len(bad)}, |G|={len(good)}")
    finals = [w for _, w, act in events if act in ("G", "B")]
    _check(assertions, "write_once", len(finals) == len(set(finals)), "an element was classified twice")

    # K_i = X ∖ (ℋ_D(a_i, x0) ∪ ℋ_D(a_i, b_i)) restricted to A (and to the ball when explicit)
    wm, lens = word_matrix(words)
    owner = np.full(len(words), -1, dtype=np.int64)
    explicit = isinstance(ball, CayleyBall)
    ball_owner = np.full(ball.n_vertices, -1, dtype=np.int64) if explicit else None
    witnesses = []
    for gi, a in enumerate(good):
        b = b_of[a]
        mask = _k_mask(wm, lens, a, b, D)
        K = np.flatnonzero(mask)
        clash = K[owner[K] >= 0]
        _check(assertions, "K_disjoint_on_A", clash.size == 0,
               f"K of {format_free_word(a)} meets K of {format_free_word(good[owner[clash[0]]])}" if clash.size else "")
        owner[K] = gi
        _check(assertions, "K_at_least_N", K.size >= N, f"#(K ∩ A) = {K.size} < N for {format_free_word(a)}")
        kb = None
        if explicit:
            bm = _k_mask(ball.word_matrix, ball.norms, a, b, D)
            kidx = np.flatnonzero(bm)
            _check(assertions, "K_disjoint_on_ball", not np.any(ball_owner[kidx] >= 0),
                   f"ball K of {format_free_word(a)} overlaps an earlier one")
            ball_owner[kidx] = gi
            kb = int(kidx.size)
        witnesses.append(GoodWitness(a, b, ((a, x0), (a, b)), [int(k) for k in K], kb))

    n_a, n1, n2 = len(words), len(problematic), len(separated)
    _check(assertions, "covering", n1 <= M * n2, f"|A1|={n1} > M·|A2|={M * n2}")
    _check(assertions, "counting", N * len(good) <= n_a, f"N·|G| = {N * len(good)} > |A| = {n_a}")
    eps_eff = 2 * M / N if N > 0 else math.inf
    _check(assertions, "exceptional_fraction", n1 <= eps_eff * n_a + 1e-9,
           f"|A∖A'| = {n1} > (2M/N)|A| = {eps_eff * n_a:.3f}")
    cls = Classification(words, D, eps, M, N, separation, accepted, problematic, separated, good, bad, reports,
                         witnesses, bad_witnesses, events, assertions)
    if strict and not cls.ok:
        failed = {k: v["detail"] for k, v in assertions.items() if not v["ok"]}
        raise PropertyViolation(f"classifier bookkeeping failed: {failed}")
    return cls


def _k_mask(wm, lens, a: Word, b: Word, D: int) -> np.ndarray:
    la = len(a)
    daz = _dist_to(wm, lens, a)
    g_x0 = daz + la - lens  # 2 (z|id)_a
    dbz = _dist_to(wm, lens, b)
    g_b = daz + tree_dist(a, b) - dbz  # 2 (z|b)_a
    return (g_x0 < 2 * D) & (g_b < 2 * D)


# ------------------------------------------------- single-halfspace pathology


def single_halfspace_failure(ball, R: int, D: int, N: int, step: int = 10, generator: int = 1) -> float:
    """Fraction of a ∈ {g^{step·i} : 0 ≤ i ≤ R} with #(A ∖ H) ≤ N for one D-halfspace H rooted at a."""
    radius, _ = _ball_radius(ball)
    if R < 0 or step < 1:
        raise RejectedInputError("R must be ≥ 0 and step ≥ 1")
    if step * R > radius:
        raise RejectedInputError(f"the geodesic set reaches norm {step * R}, beyond the ball radius {radius}")
    A = [(generator,) * (step * i) for i in range(R + 1)]
    reps = halfspace_residuals(A, D)
    return sum(1 for r in reps if r.one <= N) / len(A)


# ------------------------------------------------------ supporting hyperplane


def _W(g: Word, a: int = 1, w: int = 2) -> Word:
    """W(g) ∈ {id, w} with g·W(g)·a^i reduced for every i (no backtracking at g)."""
    if g and abs(g[-1]) == a:
        return (w,)
    return ()


def _in_cone(z: Word, prefix: Word) -> bool:
    return len(z) >= len(prefix) and z[: len(prefix)] == prefix


@dataclass
class SupportWitness:
    a: Word
    centre: Word  # the element called b in the statement
    sign: int
    residual: int  # #(A outside the first-stage halfspace)
    extension: tuple  # pigeonhole choices: 0 for a^D, 1 for w·a^D
    translate: Word  # h = c a^D w a^{-D} c^{-1}
    distance: int  # d_S(a, centre)
    contains_A: bool
    disjoint_on_ball: bool | None

    def halfspace(self, D: int) -> tuple[Word, Word]:
        return self.centre, fmul(self.centre, (1,) * D)


@dataclass
class SupportReport:
    witnesses: list
    D: int
    eps: float
    d0: int
    certify_radius: int | None

    @property
    def found(self) -> int:
        return sum(1 for w in self.witnesses if w.contains_A and w.disjoint_on_ball is not False)

    def to_json(self) -> dict:
        fmt = format_free_word
        return {
            "D": self.D,
            "eps": self.eps,
            "d0": self.d0,
            "d_above_d0": self.D > self.d0,
            "certify_radius": self.certify_radius,
            "found": self.found,
            "total": len(self.witnesses),
            "max_distance": max((w.distance for w in self.witnesses), default=0),
            "witnesses": [
                {"a": fmt(w.a), "b": fmt(w.centre), "sign": w.sign, "residual": w.residual,
                 "extension": list(w.extension), "h": fmt(w.translate), "distance": w.distance,
                 "contains_A": w.contains_A, "disjoint_on_ball": w.disjoint_on_ball}
                for w in self.witnesses
            ],
        }


def _pigeon_extension(R0: list[Word], base: Word, D: int, m: int, gen_w: int = 2) -> tuple:
    """Shortest lexicographically-first choice sequence whose cone avoids R0.

    Centres are base·a^D·s_1⋯s_n with s_i ∈ {a^D, w·a^D}; the cones
    {c·a^m·...} at a fixed depth n are pairwise disjoint, so an empty one
    exists once 2^n > #R0.  Each point of R0 occupies at most one cone per
    depth, which is decoded directly from its word.
    """
    aD = (1,) * D
    start = fmul(base, aD)
    blocks = (aD, (gen_w,) + aD)
    n = 0
    while True:
        occupied = set()
        for z in R0:
            if not _in_cone(z, start):
                continue
            rest = z[len(start):]
            seq = []
            ok = True
            for _ in range(n):
                if rest[:D] == aD:
                    seq.append(0)
                    rest = rest[D:]
                elif rest[: D + 1] == blocks[1]:
                    seq.append(1)
                    rest = rest[D + 1:]
                else:
                    ok = False
                    break
            if ok and rest[:m] == (1,) * m:
                occupied.add(tuple(seq))
        if n > 0 and len(occupied) < 2**n:
            for code in range(2**n):
                seq = tuple((code >> (n - 1 - t)) & 1 for t in range(n))
                if seq not in occupied:
                    return seq
        n += 1
        if n > 64:
            raise PropertyViolation("pigeonhole search did not terminate")


def supporting_hyperplane(ball, A, D: int, eps: float, d0: int | None = None,
                          certify: bool = True) -> SupportReport:
    """Supporting halfspaces ℋ_half(c, c·a^D) ⊇ A with a disjoint translate.

    For each a ∈ A: take v_± = a·W(a)·a^D·w^{±1}·a^{2D}, keep the sign whose
    halfspace misses fewer points of A, then extend the centre by a pigeonhole
    search until the halfspace contains all of A.  With ``certify`` the
    disjointness of ℋ and hℋ is checked on every vertex of the explicit ball.
    """
    if not isinstance(ball, CayleyBall) or not isinstance(ball.pres, FreeGroup):
        raise RejectedInputError("supporting_hyperplane needs an explicit free-group ball")
    if D < 1 or int(D) != D:
        raise RejectedInputError("D must be a positive integer")
    D = int(D)
    words = _dedupe_sorted(_as_words(ball, A))
    if not words:
        raise RejectedInputError("A is empty")
    if max(len(w) for w in words) > ball.radius:
        raise RejectedInputError("A does not fit in the certifying ball")
    d0 = D0_FORMULA if d0 is None else int(d0)
    m = (D + 1) // 2  # z ∉ ℋ_half(c, c a^D) ⟺ c^{-1} z starts with a^{⌈D/2⌉}
    aD = (1,) * D
    out = []
    for a in words:
        base = fmul(a, _W(a))
        cands = []
        for sign in (1, -1):
            v = fmul(fmul(fmul(base, aD), (2 * sign,)), (1,) * (2 * D))
            prefix = fmul(v, (1,) * m)
            R0 = [z for z in words if _in_cone(z, prefix)]
            cands.append((len(R0), sign, v, R0))
        res, sign, v, R0 = min(cands, key=lambda t: (t[0], -t[1]))
        if res == 0:
            centre, ext = v, ()
        else:
            ext = _pigeon_extension(R0, v, D, m)
            centre = fmul(v, aD)
            for s in ext:
                centre = fmul(centre, aD if s == 0 else (2,) + aD)
        far = fmul(centre, aD)
        contains = all(tree_dist(z, centre) < tree_dist(z, far) for z in words)
        h = fmul(fmul(fmul(fmul(centre, aD), (2,)), (-1,) * D), finv(centre))
        disjoint = None
        if certify:
            wm, norms = ball.word_matrix, ball.norms
            in_h = _dist_to(wm, norms, centre) < _dist_to(wm, norms, far)
            hc, hfar = fmul(h, centre), fmul(h, far)
            in_hh = _dist_to(wm, norms, hc) < _dist_to(wm, norms, hfar)
            disjoint = not bool(np.any(in_h & in_hh))
        out.append(SupportWitness(a, centre, sign, res, ext, h, tree_dist(a, centre), contains, disjoint))
    return SupportReport(out, D, eps, d0, ball.radius if certify else None)


__all__ = [
    "CONSTANTS",
    "D0_FORMULA",
    "AntiHalfspace",
    "Classification",
    "GoodWitness",
    "ResidualReport",
    "SupportReport",
    "SupportWitness",
    "anti_halfspace_members",
    "canonical_key",
    "halfspace_residual",
    "halfspace_residuals",
    "is_anti_member",
    "magic_classify",
    "occupancy",
    "separated_subset",
    "single_halfspace_failure",
    "supporting_hyperplane",
    "word_matrix",
]
