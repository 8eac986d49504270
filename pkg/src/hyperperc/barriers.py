"""Barrier families, barrier checks and roughly-branching certificates on F_k.

All constructions are specialised to the Cayley tree of a free group with
base point id and reference axis ⟨a⟩.  On a tree the unique simple path
between two vertices is the geodesic, and every path between them visits
every geodesic vertex, so "B separates s from t" reduces to "some vertex of
[s, t] lies in B".  That makes barrier checks on balls far too large to
materialise exact: targets are streamed in trie order and each prefix is
tested once.  Explicit ``CayleyBall`` inputs are checked by plain BFS on the
ball with B removed, which works for any presentation.

Word sets are given as explicit word lists, ``GroupElement``s, vertex indices
(explicit balls only) or membership predicates.  ``Cone(prefix)`` is the
halfspace ℋ_{|prefix|}(id, prefix): the words whose reduced spelling starts
with ``prefix``.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numba as nb
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from .errors import RejectedInputError, ResourceError
from .geometry import fmul, lcp, tree_geodesic_words
from .groups import CayleyBall, FreeGroup, GroupElement, TreeBall, format_free_word
from .magic import _W as w_choice
from .magic import canonical_key, separated_subset, word_matrix

Word = tuple
DEFAULT_MAX_EXPLORED = 2_000_000
DEFAULT_MAX_PRODUCTS = 4_000_000
GDE_RUN = 250  # 𝒢_{D,E} forbids a-runs of length 250D near the start
NF_BLOCK = 300  # NF_{300D}^{≥E} is the barrier in front of 𝒢_{D,E}


class VacuousBarrierWarning(UserWarning):
    """The source or a target lies in B, so the barrier property holds trivially there."""


# ------------------------------------------------------------------ inputs


def _tree_params(ball) -> tuple[int, int]:
    """(radius, rank) for a tree ball given as CayleyBall, TreeBall or an int radius (F_2)."""
    if isinstance(ball, (CayleyBall, TreeBall)):
        if not isinstance(ball.pres, FreeGroup):
            raise RejectedInputError("barrier constructions are specialised to free groups")
        return ball.radius, ball.pres.rank
    if isinstance(ball, (int, np.integer)):
        if ball < 0:
            raise RejectedInputError("radius must be non-negative")
        return int(ball), 2
    raise RejectedInputError(f"expected a ball or a radius, got {type(ball).__name__}")


def _to_word(g) -> Word:
    if isinstance(g, GroupElement):
        return tuple(g.word)
    return tuple(int(x) for x in g)


def _letters(rank: int) -> tuple[int, ...]:
    out = []
    for i in range(1, rank + 1):
        out += [i, -i]
    return tuple(out)


def fmt(w: Sequence[int]) -> str:
    return format_free_word(tuple(w))


@dataclass(frozen=True)
class Cone:
    """ℋ_{|prefix|}(id, prefix) on the tree: words starting with ``prefix``."""

    prefix: Word

    def contains(self, w) -> bool:
        w = _to_word(w)
        return len(w) >= len(self.prefix) and w[: len(self.prefix)] == self.prefix

    __contains__ = contains

    def count(self, radius: int, rank: int = 2) -> int:
        n = len(self.prefix)
        if n > radius:
            return 0
        q = 2 * rank - 1
        if n == 0:
            return 1 + sum(2 * rank * q ** (j - 1) for j in range(1, radius + 1))
        return sum(q**j for j in range(radius - n + 1))

    def members(self, radius: int, rank: int = 2) -> Iterator[Word]:
        """Every cone word of norm ≤ radius, in depth-first lexicographic order."""
        if len(self.prefix) > radius:
            return
        letters = _letters(rank)
        stack = [self.prefix]
        while stack:
            w = stack.pop()
            yield w
            if len(w) < radius:
                for s in reversed(letters):
                    if not w or w[-1] != -s:
                        stack.append(w + (s,))

    def describe(self) -> dict:
        return {"kind": "cone", "prefix": fmt(self.prefix), "D": len(self.prefix)}


def halfspace_target(y, D: int | None = None) -> Cone:
    """ℋ_D(id, y) = {z : (z|y)_id ≥ D} as a cone; D defaults to |y|."""
    y = _to_word(y)
    D = len(y) if D is None else int(D)
    if not 0 <= D <= len(y):
        raise RejectedInputError("ℋ_D(id, y) is a cone only for 0 ≤ D ≤ |y|")
    return Cone(y[:D])


@dataclass
class WordSet:
    """A set of reduced words given by explicit members, a predicate, or both.

    ``words`` is the finite member list when one was enumerated; ``predicate``
    decides membership for arbitrary words (used on implicit balls).
    """

    name: str
    params: dict
    words: tuple | None = None
    predicate: Callable[[Word], bool] | None = None
    _lookup: frozenset | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.words is None and self.predicate is None:
            raise RejectedInputError("a word set needs members or a predicate")
        if self.words is not None:
            self.words = tuple(sorted(set(self.words), key=canonical_key))
            self._lookup = frozenset(self.words)

    def contains(self, w) -> bool:
        w = _to_word(w)
        if self._lookup is not None and (self.predicate is None or w in self._lookup):
            return w in self._lookup
        return bool(self.predicate(w))

    __contains__ = contains

    def __len__(self) -> int:
        if self.words is None:
            raise TypeError("predicate-only word set has no length")
        return len(self.words)

    def __iter__(self):
        if self.words is None:
            raise TypeError("predicate-only word set cannot be iterated")
        return iter(self.words)

    def members(self, ball) -> list[Word]:
        if self.words is not None:
            r, _ = _tree_params(ball) if not isinstance(ball, CayleyBall) else (ball.radius, 0)
            return [w for w in self.words if len(w) <= r]
        if isinstance(ball, CayleyBall):
            return [w for w in ball.words if self.predicate(w)]
        raise RejectedInputError(f"{self.name} is predicate-only; enumerate it on an explicit ball")


def _membership(B, ball) -> Callable[[Word], bool]:
    if isinstance(B, (WordSet, Cone)):
        return B.contains
    if callable(B):
        return lambda w: bool(B(w))
    if isinstance(B, np.ndarray) and B.dtype.kind in "iu":
        if not isinstance(ball, CayleyBall):
            raise RejectedInputError("vertex indices need an explicit CayleyBall")
        s = frozenset(ball.words[int(i)] for i in B)
        return s.__contains__
    s = frozenset(_to_word(g) for g in B)
    return s.__contains__


# --------------------------------------------------------------- run scans


def a_runs(w: Sequence[int], gen: int = 1) -> list[tuple[int, int, int]]:
    """Maximal runs of a^{±1} in a reduced word: (start, length, sign)."""
    out = []
    i, n = 0, len(w)
    while i < n:
        if abs(w[i]) == gen:
            j = i
            while j < n and w[j] == w[i]:
                j += 1
            out.append((i, j - i, 1 if w[i] > 0 else -1))
            i = j
        else:
            i += 1
    return out


def first_long_run(w: Sequence[int], L: int, gen: int = 1) -> int:
    """Start of the first a^{±1}-run of length ≥ L, or -1."""
    for start, length, _ in a_runs(w, gen):
        if length >= L:
            return start
    return -1


@nb.njit(cache=True, parallel=True)
def _first_long_run_rows(wm, lens, gen, L):
    n = wm.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    for i in nb.prange(n):
        run = 0
        start = 0
        for j in range(lens[i]):
            x = wm[i, j]
            if x == gen or x == -gen:
                if run > 0 and x == wm[i, j - 1]:
                    run += 1
                else:
                    run = 1
                    start = j
                if run >= L:
                    out[i] = start
                    break
            else:
                run = 0
    return out


def first_long_run_rows(ball: CayleyBall, L: int, gen: int = 1) -> np.ndarray:
    return _first_long_run_rows(np.ascontiguousarray(ball.word_matrix, dtype=np.int8), ball.norms, gen, int(L))


# ------------------------------------------------------------- NF and 𝒢


def nf_predicate(D: int, E: int | None = None, gen: int = 1) -> Callable[[Word], bool]:
    D = int(D)
    if D < 1:
        raise RejectedInputError("NF_D needs D ≥ 1")
    E = 0 if E is None else int(E)
    return lambda w: len(w) >= E and first_long_run(w, D, gen) < 0


def nf_set(ball, D: int, E: int | None = None, gen: int = 1) -> WordSet:
    """NF_D (optionally NF_D^{≥E}): reduced words with no a^{±D} run.

    On the tree d_γ(id, g) over cosets γ = h⟨a⟩ is the length of the a-run
    of g lying on γ, so bounded projections mean bounded runs.  Explicit balls
    get the exact member list; implicit ones get a predicate.
    """
    pred = nf_predicate(D, E, gen)
    params = {"D": int(D), "E": None if E is None else int(E)}
    if isinstance(ball, CayleyBall):
        _tree_params(ball)
        starts = first_long_run_rows(ball, D, gen)
        keep = starts < 0
        if E is not None:
            keep &= ball.norms >= E
        words = [ball.words[i] for i in np.flatnonzero(keep)]
        return WordSet("NF", params, words=words, predicate=pred)
    _tree_params(ball)
    return WordSet("NF", params, predicate=pred)


def g_de_predicate(D: int, E: int, E_prime: int | None = None, gen: int = 1) -> Callable[[Word], bool]:
    D, E = int(D), int(E)
    window = (E if E_prime is None else int(E_prime)) + GDE_RUN * D
    L = GDE_RUN * D

    def pred(w):
        if len(w) < E:
            return False
        s = first_long_run(w, L, gen)
        return s < 0 or s > window

    return pred


def g_de_set(ball, D: int, E: int, E_prime: int | None = None, gen: int = 1) -> WordSet:
    """𝒢_{D,E}: norm ≥ E and no a^{±250D} run starting within E′ + 250D of id.

    A run starting at prefix length ℓ is reached by some h with ‖h‖ ≤ E′
    overlapping it in ≥ 250D letters only if ℓ ≤ E′ + 250D, so the window is
    an over-approximation of the excluded set.  E′ defaults to E.
    """
    radius, _ = _tree_params(ball)
    if D < 1 or E < 0:
        raise RejectedInputError("need D ≥ 1 and E ≥ 0")
    if E > radius:
        raise RejectedInputError(f"E = {E} exceeds the ball radius {radius}")
    Ep = E if E_prime is None else int(E_prime)
    pred = g_de_predicate(D, E, Ep, gen)
    params = {"D": int(D), "E": int(E), "E_prime": Ep, "window": Ep + GDE_RUN * int(D), "run": GDE_RUN * int(D)}
    if isinstance(ball, CayleyBall):
        starts = first_long_run_rows(ball, GDE_RUN * D, gen)
        keep = (ball.norms >= E) & ((starts < 0) | (starts > params["window"]))
        return WordSet("G_DE", params, words=[ball.words[i] for i in np.flatnonzero(keep)], predicate=pred)
    return WordSet("G_DE", params, predicate=pred)


# ------------------------------------------------------------ is_barrier


@dataclass
class BarrierResult:
    ok: bool
    path: list | None  # avoiding path from source to a target, as words
    mode: str
    explored: int
    targets_checked: int
    warnings: list = field(default_factory=list)

    def __iter__(self):
        yield self.ok
        yield self.path

    def __bool__(self):
        return self.ok

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "mode": self.mode,
            "explored": self.explored,
            "targets_checked": self.targets_checked,
            "path": None if self.path is None else [fmt(w) for w in self.path],
            "warnings": list(self.warnings),
        }


def _warn(msgs: list, text: str) -> None:
    msgs.append(text)
    warnings.warn(text, VacuousBarrierWarning, stacklevel=3)


def _lcp_fast(u: Word, v: Word) -> int:
    lo, hi = 0, min(len(u), len(v))
    if u[:hi] == v[:hi]:
        return hi
    while lo < hi:  # largest k with equal prefixes lies in [lo, hi)
        mid = (lo + hi + 1) // 2
        if u[:mid] == v[:mid]:
            lo = mid
        else:
            hi = mid - 1
    return lo


def _target_stream(targets, ball, radius: int, rank: int):
    if isinstance(targets, Cone):
        return targets.members(radius, rank)
    if isinstance(targets, WordSet) and targets.words is not None:
        return iter(targets.words)
    if isinstance(targets, np.ndarray) and targets.dtype.kind in "iu":
        if not isinstance(ball, CayleyBall):
            raise RejectedInputError("vertex indices need an explicit CayleyBall")
        return (ball.words[int(i)] for i in targets)
    return (_to_word(t) for t in targets)


def _tree_geodesic_check(in_b, source: Word, targets: Iterable[Word], radius: int) -> BarrierResult:
    msgs: list = []
    s = source
    # sb[m]: some prefix of s with length in [m, |s|] lies in B
    sb = [False] * (len(s) + 2)
    for m in range(len(s), -1, -1):
        sb[m] = sb[m + 1] or in_b(s[:m])
    if in_b(s):
        _warn(msgs, f"source {fmt(s)} lies in B; the barrier property holds vacuously")
        return BarrierResult(True, None, "tree-geodesic", 1, 0, msgs)
    prev: Word = ()
    last = [0 if in_b(()) else -1]  # last[d]: deepest blocked prefix of the current path, up to depth d
    tested = len(s) + 1
    checked = vacuous = 0
    for t in targets:
        if len(t) > radius:
            raise RejectedInputError(f"target {fmt(t)} lies outside the radius-{radius} ball")
        c = _lcp_fast(prev, t)
        del last[c + 1 :]
        for d in range(c + 1, len(t) + 1):
            last.append(d if in_b(t[:d]) else last[d - 1])
            tested += 1
        prev = t
        checked += 1
        if last[len(t)] == len(t):
            vacuous += 1
        m = _lcp_fast(s, t)
        if not (sb[m] or last[len(t)] >= m):
            return BarrierResult(False, tree_geodesic_words(s, t), "tree-geodesic", tested, checked, msgs)
    if vacuous:
        _warn(msgs, f"{vacuous} target(s) lie in B and are blocked vacuously")
    return BarrierResult(True, None, "tree-geodesic", tested, checked, msgs)


def _lazy_search(in_b, is_target, source: Word, radius: int, rank: int, max_explored: int) -> BarrierResult:
    msgs: list = []
    if in_b(source):
        _warn(msgs, f"source {fmt(source)} lies in B; the barrier property holds vacuously")
        return BarrierResult(True, None, "lazy-bfs", 1, 0, msgs)
    letters = _letters(rank)
    parent = {source: None}
    queue = deque([source])
    vacuous = 0
    while queue:
        w = queue.popleft()
        if is_target(w):
            path = [w]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return BarrierResult(False, path[::-1], "lazy-bfs", len(parent), 1, msgs)
        for s in letters:
            v = fmul(w, (s,))
            if len(v) > radius or v in parent:
                continue
            if in_b(v):
                if is_target(v):
                    vacuous += 1
                continue
            parent[v] = w
            if len(parent) > max_explored:
                raise ResourceError(f"barrier search explored more than {max_explored} vertices")
            queue.append(v)
    if vacuous:
        _warn(msgs, f"{vacuous} target(s) adjacent to the explored region lie in B")
    return BarrierResult(True, None, "lazy-bfs", len(parent), 0, msgs)


def _explicit_bfs(ball: CayleyBall, B, source, targets) -> BarrierResult:
    msgs: list = []
    n = ball.n_vertices
    in_b_fn = _membership(B, ball)
    if isinstance(B, np.ndarray) and B.dtype.kind in "iu":
        bmask = np.zeros(n, bool)
        bmask[B] = True
    else:
        bmask = np.fromiter((in_b_fn(w) for w in ball.words), bool, count=n)
    src = int(source) if isinstance(source, (int, np.integer)) else ball.index(source)
    if isinstance(targets, np.ndarray) and targets.dtype.kind in "iu":
        tmask = np.zeros(n, bool)
        tmask[targets] = True
    elif isinstance(targets, (Cone, WordSet)) or callable(targets):
        f = targets.contains if isinstance(targets, (Cone, WordSet)) else targets
        tmask = np.fromiter((bool(f(w)) for w in ball.words), bool, count=n)
    else:
        tmask = np.zeros(n, bool)
        tmask[ball.indices(targets)] = True
    if bmask[src]:
        _warn(msgs, "source lies in B; the barrier property holds vacuously")
        return BarrierResult(True, None, "bfs", 1, int(tmask.sum()), msgs)
    nv = int((tmask & bmask).sum())
    if nv:
        _warn(msgs, f"{nv} target(s) lie in B and are blocked vacuously")
    keep = ~bmask
    e = ball.edges
    sel = keep[e[:, 0]] & keep[e[:, 1]]
    u, v = e[sel, 0], e[sel, 1]
    g = csr_matrix((np.ones(u.size, np.int8), (u, v)), shape=(n, n))
    order, pred = breadth_first_order(g, src, directed=False, return_predecessors=True)
    hit = order[tmask[order]]
    if hit.size == 0:
        return BarrierResult(True, None, "bfs", int(order.size), int(tmask.sum()), msgs)
    t = int(hit[0])
    path = [t]
    while path[-1] != src:
        path.append(int(pred[path[-1]]))
    words = [ball.words[i] for i in reversed(path)]
    return BarrierResult(False, words, "bfs", int(order.size), int(tmask.sum()), msgs)


def is_barrier(ball, B, source, targets, max_explored: int = DEFAULT_MAX_EXPLORED) -> BarrierResult:
    """Does every path inside the ball from ``source`` to a target meet B?

    Unpacks as ``(ok, path)``; on failure ``path`` is an avoiding path as a
    list of words.  Dispatch:

    * explicit ``CayleyBall``: BFS on the ball with B deleted (any presentation);
    * tree ball or radius with listed targets (or a ``Cone``): every target's
      geodesic is tested, sharing prefixes in trie order;
    * tree ball or radius with a predicate target: breadth-first search of
      ball ∖ B from the source, capped at ``max_explored`` vertices.
    """
    if isinstance(ball, CayleyBall) and not isinstance(ball.pres, FreeGroup):
        return _explicit_bfs(ball, B, source, targets)
    radius, rank = _tree_params(ball)
    if isinstance(ball, CayleyBall):
        return _explicit_bfs(ball, B, source, targets)
    src = _to_word(source) if not isinstance(source, (int, np.integer)) else ()
    if isinstance(source, (int, np.integer)) and source != 0:
        raise RejectedInputError("vertex indices need an explicit CayleyBall")
    if len(src) > radius:
        raise RejectedInputError("source lies outside the ball")
    in_b = _membership(B, ball)
    predicate_target = callable(targets) or (isinstance(targets, WordSet) and targets.words is None)
    if predicate_target:
        f = targets.contains if isinstance(targets, WordSet) else targets
        return _lazy_search(in_b, f, src, radius, rank, max_explored)
    return _tree_geodesic_check(in_b, src, _target_stream(targets, ball, radius, rank), radius)


# -------------------------------------------------------- barrier families


@dataclass
class BarrierFamily:
    """Disjoint levels B_1…B_m between a source and a declared target set."""

    kind: str
    levels: list  # WordSet per level
    target: Cone
    source: Word
    params: dict
    ball_radius: int
    bands: list | None = None

    @property
    def count(self) -> int:
        return len(self.levels)

    def level_indices(self, ball: CayleyBall, i: int) -> np.ndarray:
        return ball.indices(self.levels[i].members(ball))

    def verify(self, ball=None) -> list[BarrierResult]:
        """is_barrier for every level against the declared target."""
        ball = self.ball_radius if ball is None else ball
        return [is_barrier(ball, lvl, self.source, self.target) for lvl in self.levels]

    def pairwise_disjoint(self) -> bool:
        seen: set = set()
        for lvl in self.levels:
            if lvl.words is None:
                raise RejectedInputError("disjointness needs enumerated levels")
            if seen & set(lvl.words):
                return False
            seen |= set(lvl.words)
        return True

    def header(self, i: int) -> dict:
        return {"kind": self.kind, "params": self.params, "ball_radius": self.ball_radius, "level_index": i + 1,
                "target": self.target.describe()}

    def export_level(self, i: int, ball=None) -> str:
        """JSON header line followed by one word per line."""
        words = self.levels[i].words if ball is None else self.levels[i].members(ball)
        if words is None:
            raise RejectedInputError("predicate levels export only against an explicit ball")
        return json.dumps(self.header(i), sort_keys=True) + "\n" + "".join(fmt(w) + "\n" for w in words)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.params, "ball_radius": self.ball_radius,
                "target": self.target.describe(), "bands": self.bands,
                "level_sizes": [len(lvl) if lvl.words is not None else None for lvl in self.levels]}


def vertical_barriers(ball, step: int, count: int, gen: int = 1, transverse: int = 2) -> BarrierFamily:
    """B_i = {a^{step·i} b^k : |k| ≤ radius − step·i}, i = 1…count.

    The target is the cone ℋ(id, a^{step·(count+1)}) behind the last level.
    Truncating k to the ball loses nothing: a path inside the ball that meets
    the full coset a^{step·i}⟨b⟩ meets it inside the ball.
    """
    radius, rank = _tree_params(ball)
    if step < 1 or count < 1:
        raise RejectedInputError("step and count must be positive")
    if max(abs(gen), abs(transverse)) > rank or abs(gen) == abs(transverse):
        raise RejectedInputError("generator and transverse letter must be distinct generators")
    if step * (count + 1) > radius:
        raise RejectedInputError(
            f"radius {radius} is too small: the target behind level {count} starts at norm {step * (count + 1)}")
    levels = []
    for i in range(1, count + 1):
        base = (gen,) * (step * i)
        K = radius - step * i
        words = [base + ((transverse,) * k if k >= 0 else (-transverse,) * (-k)) for k in range(-K, K + 1)]
        levels.append(WordSet(f"vertical[{i}]", {"i": i}, words=words))
    params = {"step": step, "count": count, "gen": fmt((gen,)), "transverse": fmt((transverse,))}
    return BarrierFamily("vertical", levels, Cone((gen,) * (step * (count + 1))), (), params, radius)


def projection_level_predicate(y: Word, lo: float, hi: float, cap: float, axis_min: float,
                               gen: int = 1) -> Callable[[Word], bool]:
    """Exact membership for one projection band.

    g qualifies when (g|y)_id ∈ [lo, hi] and every coset line of ⟨a⟩ on which
    g travels more than ``cap`` also carries at least ``axis_min`` of [id, y].
    """
    y_runs = {start: length for start, length, _ in a_runs(y, gen)}

    def pred(g):
        c = lcp(g, y)
        if not lo <= c <= hi:
            return False
        for start, length, _ in a_runs(g, gen):
            if length > cap:
                # same coset line iff the words agree before the run
                if y[:start] != g[:start] or y_runs.get(start, 0) < axis_min:
                    return False
        return True

    return pred


def projection_barriers(ball, y, K0: float = 1.0, spacing: float = 100, width: float = 25, cap: float = 100,
                        axis_min: float = 5, gen: int = 1) -> BarrierFamily:
    """Levels B_i = {g : (g|y)_id ∈ I_i and the axis-projection cap holds}.

    I_i = [spacing·K0·i − width·K0, spacing·K0·i + width·K0] for
    i = 1…⌊|y| / (spacing·K0)⌋.  Axes are the cosets h⟨a⟩; d_γ(id, g) is the
    length of g's a-run on γ, and d_γ(id, y) likewise, so the cap
    "d_γ(id,y) ≥ axis_min·K0 or d_γ(id,g) ≤ cap·K0" is evaluated exactly.
    Explicit balls get enumerated levels; implicit ones get predicates.
    """
    radius, _ = _tree_params(ball)
    y = _to_word(y)
    r = spacing * K0
    if r <= 0:
        raise RejectedInputError("band spacing must be positive")
    m = int(math.floor(len(y) / r))
    bands, levels = [], []
    for i in range(1, m + 1):
        lo, hi = r * i - width * K0, r * i + width * K0
        pred = projection_level_predicate(y, lo, hi, cap * K0, axis_min * K0, gen)
        params = {"i": i, "band": [lo, hi]}
        if isinstance(ball, CayleyBall):
            lvl = WordSet(f"projection[{i}]", params, words=[w for w in ball.words if pred(w)], predicate=pred)
        else:
            lvl = WordSet(f"projection[{i}]", params, predicate=pred)
        bands.append([lo, hi])
        levels.append(lvl)
    params = {"y": fmt(y), "K0": K0, "spacing": spacing, "width": width, "cap": cap, "axis_min": axis_min}
    return BarrierFamily("projection", levels, Cone(y), (), params, radius, bands=bands)


def compare_vertical_projection(radius: int, step: int, count: int, width: float = 0, cap: float | None = None):
    """Membership comparison of the two constructions for y = a^{step·(count+1)}.

    Returns per-level flags: vertical ⊆ projection, and a projection member
    outside the vertical level when one exists among a few probe shapes.
    """
    vert = vertical_barriers(radius, step, count)
    y = (1,) * (step * (count + 1))
    proj = projection_barriers(radius, y, spacing=step, width=width, cap=step if cap is None else cap)
    rows = []
    for i, (v, p) in enumerate(zip(vert.levels, proj.levels), start=1):
        subset = all(p.contains(w) for w in v.words)
        probe = (1,) * (step * i) + (2, 1, 2)
        extra = probe if len(probe) <= radius and p.contains(probe) and probe not in v else None
        rows.append({"level": i, "vertical_subset": subset, "extra_member": None if extra is None else fmt(extra)})
    return rows


# -------------------------------------------------------- rough branching


@dataclass
class BranchingCertificate:
    base: tuple
    witness: tuple
    r: float
    k_max: int
    max_cover_distance: int | None
    uncovered: list
    collisions: list  # (k, seq1, seq2, product) with seqs as index tuples into witness
    products_checked: dict

    @property
    def covered(self) -> bool:
        return not self.uncovered

    @property
    def injective(self) -> bool:
        return not self.collisions

    @property
    def ok(self) -> bool:
        return self.covered and self.injective

    def collision_words(self) -> list:
        out = []
        for k, s1, s2, prod in self.collisions:
            out.append({"k": k, "first": [fmt(self.witness[i]) for i in s1],
                        "second": [fmt(self.witness[i]) for i in s2], "product": fmt(prod)})
        return out

    def to_json(self) -> dict:
        return {"ok": self.ok, "r": self.r, "k_max": self.k_max, "base_size": len(self.base),
                "witness_size": len(self.witness), "max_cover_distance": self.max_cover_distance,
                "uncovered": [fmt(w) for w in self.uncovered[:20]], "collisions": self.collision_words(),
                "products_checked": {str(k): v for k, v in self.products_checked.items()}}


def _min_dist_to_set(points: list[Word], targets: list[Word]) -> np.ndarray:
    from .magic import _dist_to

    if not targets:
        return np.full(len(points), np.iinfo(np.int64).max)
    wm, lens = word_matrix(targets)
    out = np.empty(len(points), dtype=np.int64)
    for i, p in enumerate(points):
        out[i] = int(_dist_to(wm, lens, p).min())
    return out


def check_roughly_branching(B, Bp, r: float, k_max: int, max_products: int = DEFAULT_MAX_PRODUCTS,
                            stop_at_first: bool = True) -> BranchingCertificate:
    """Certify B ⊆ N_r(B′) and injectivity of (g_1,…,g_k) ↦ g_1⋯g_k on B′^k, k ≤ k_max.

    Products are reduced in F_k and hashed; the first collision (or all of
    them at the first failing length when ``stop_at_first`` is false) is
    recorded with both index sequences.
    """
    if k_max < 2:
        raise RejectedInputError("k_max must be at least 2")
    base = tuple(sorted({_to_word(g) for g in B}, key=canonical_key))
    wit = tuple(sorted({_to_word(g) for g in Bp}, key=canonical_key))
    dists = _min_dist_to_set(list(base), list(wit))
    uncovered = [base[i] for i in np.flatnonzero(dists > r)]
    maxd = int(dists.max()) if base else None
    total = sum(len(wit) ** k for k in range(1, k_max + 1))
    if total > max_products:
        raise ResourceError(f"{total} products exceed the cap of {max_products}")
    collisions: list = []
    checked = {}
    layer: dict = {(): ()}  # product word -> index sequence
    for k in range(1, k_max + 1):
        nxt: dict = {}
        for prod, seq in layer.items():
            for j, g in enumerate(wit):
                q = fmul(prod, g)
                other = nxt.get(q)
                if other is None:
                    nxt[q] = seq + (j,)
                else:
                    collisions.append((k, other, seq + (j,), q))
                    if stop_at_first:
                        break
            if collisions and stop_at_first:
                break
        checked[k] = len(wit) ** k if not collisions else len(nxt)
        if collisions:
            break
        layer = nxt
    return BranchingCertificate(base, wit, r, k_max, maxd, uncovered, collisions, checked)


def reproduce_collision(witness: Sequence[Word], seq1, seq2) -> bool:
    """Recompute both products by letter-level free reduction (independent of ``fmul``)."""
    pres = FreeGroup(max(max((abs(x) for w in witness for x in w), default=1), 1))

    def product(seq):
        letters: list = []
        for i in seq:
            letters.extend(witness[i])
        return pres.reduce_letters(letters)

    return tuple(seq1) != tuple(seq2) and product(seq1) == product(seq2)


def plant_collision(Bp) -> list[Word]:
    """B′ plus h² for its first element h, so (h, h²) and (h², h) collide."""
    wit = sorted({_to_word(g) for g in Bp}, key=canonical_key)
    if not wit:
        raise RejectedInputError("need a nonempty witness set")
    h = next((w for w in wit if w), None)
    if h is None:
        raise RejectedInputError("need a non-identity element to plant a collision")
    return wit + [fmul(h, h)]


def f_barrier(g: Word, D: int, gen: int = 1, w: int = 2, L: int | None = None) -> Word:
    """g·𝒲(g)·a^L·𝒲 with L = 50D by default."""
    L = 50 * D if L is None else L
    return fmul(fmul(fmul(g, w_choice(g, gen, w)), (gen,) * L), (w,))


def f_nf(g: Word, D: int, gen: int = 1, w: int = 2) -> Word:
    """g·𝒲(g)·a^{50D}."""
    return fmul(fmul(g, w_choice(g, gen, w)), (gen,) * (50 * D))


def f_image_witness(B, D: int, kind: str = "barrier", separation: int = 2) -> tuple[list[Word], int]:
    """B′ = F(S) for a greedy ``separation``-separated S ⊆ B, with its cover radius.

    Two distinct points at distance ≥ 2 never share an F-image (F(g) differs
    from g by a fixed tail up to one 𝒲 letter), so the default separation is
    the smallest one that keeps F injective.  The returned radius bounds
    d(g, B′) for every g ∈ B: (separation − 1) to reach S, plus the F tail.
    """
    if kind not in ("barrier", "nf"):
        raise RejectedInputError("kind must be 'barrier' or 'nf'")
    S = separated_subset([_to_word(g) for g in B], separation)
    F = f_barrier if kind == "barrier" else f_nf
    image = [F(g, D) for g in S]
    tail = 50 * D + (2 if kind == "barrier" else 1)
    return image, (separation - 1) + tail


# ------------------------------------------------------------- capacities


def branching_capacity(ball, B, p: float, rank: int | None = None) -> dict:
    """Σ_{g∈B} τ_p(g) with τ_p(g) = p^{|g|} (exact on the tree), p ≤ p_c."""
    if rank is None:
        rank = _tree_params(ball)[1] if ball is not None else 2
    pc = 1.0 / (2 * rank - 1)
    if not 0 <= p <= pc + 1e-15:
        raise RejectedInputError(f"capacity bound applies for 0 ≤ p ≤ p_c = {pc}")
    if isinstance(B, np.ndarray) and B.dtype.kind in "iu":
        norms = ball.norms[B]
    else:
        words = B.words if isinstance(B, WordSet) else [_to_word(g) for g in B]
        norms = np.array([len(w) for w in words], dtype=np.int64)
    counts = np.bincount(norms) if norms.size else np.zeros(0, np.int64)
    total = math.fsum(int(c) * p**n for n, c in enumerate(counts) if c)
    return {"p": p, "size": int(norms.size), "capacity": total, "at_most_one": total <= 1.0}


def vertical_capacity_closed_form(p: float, s: int) -> float:
    """Σ_{k∈ℤ} p^{s+|k|} = p^s (1 + 2p/(1−p))."""
    return p**s * (1 + 2 * p / (1 - p))


def nested_capacity(family: BarrierFamily, p: float) -> dict:
    """Per-level capacities and the pigeonhole min ≤ mean."""
    caps = [branching_capacity(None, lvl, p)["capacity"] for lvl in family.levels]
    mean = math.fsum(caps) / len(caps)
    return {"p": p, "capacities": caps, "min": min(caps), "mean": mean, "holds": min(caps) <= mean * (1 + 1e-12)}


def halfspace_cluster_constant(R: int, p: float, rank: int = 2) -> dict:
    """K_R = R·E_p[#(C(id) ∩ ℋ(id, a^R))]/χ_p, exact on the tree.

    E[#(C ∩ cone)] = p^R / (1 − (2k−1)p) and χ_p = (1+p)/(1 − (2k−1)p).
    """
    q = 2 * rank - 1
    if not 0 <= p < 1 / q:
        raise RejectedInputError("need p below p_c")
    e = p**R / (1 - q * p)
    chi = (1 + p) / (1 - q * p)
    return {"R": R, "p": p, "expected_hits": e, "chi": chi, "K": R * e / chi}


def de_barrier_check(radius: int, D: int, E: int, E_prime: int | None = None,
                     max_explored: int = DEFAULT_MAX_EXPLORED) -> dict:
    """is_barrier(NF_{300D}^{≥E}, id, 𝒢_{D,E}) on the tree ball of the given radius."""
    G = g_de_set(radius, D, E, E_prime)
    B = nf_set(radius, NF_BLOCK * D, E)
    res = is_barrier(radius, B, (), G, max_explored=max_explored)
    return {"radius": radius, "D": D, "E": E, "gde": G.params, "result": res.to_json(), "ok": res.ok}


__all__ = [
    "Cone", "WordSet", "BarrierResult", "BarrierFamily", "BranchingCertificate", "VacuousBarrierWarning",
    "a_runs", "first_long_run", "halfspace_target", "nf_predicate", "nf_set", "g_de_predicate", "g_de_set",
    "is_barrier", "vertical_barriers", "projection_barriers", "projection_level_predicate",
    "compare_vertical_projection", "check_roughly_branching", "reproduce_collision", "plant_collision",
    "f_barrier", "f_nf", "f_image_witness", "branching_capacity", "vertical_capacity_closed_form",
    "nested_capacity", "halfspace_cluster_constant", "de_barrier_check",
]
