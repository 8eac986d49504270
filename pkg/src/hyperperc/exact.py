"""Exact probabilities on tiny graphs by enumerating every configuration.

A configuration is an integer bit mask over the edge list (bit ``e`` set means
edge ``e`` is open).  Event indicators are boolean arrays of length ``2**m``.
Probabilities come from the number ``N_k`` of configurations in the event with
``k`` open edges, so rational ``p`` gives exact ``Fraction`` results.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numba as nb
import numpy as np

from .errors import RejectedInputError, ResourceError

MAX_EDGES = 20
MAX_VERTICES = 24


@dataclass(frozen=True)
class TinyGraph:
    n_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(u), int(v)) for u, v in self.edges))
        if self.n_vertices < 1:
            raise RejectedInputError("graph needs at least one vertex")
        for u, v in self.edges:
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices) or u == v:
                raise RejectedInputError(f"bad edge ({u}, {v})")
        if not _connected(self.n_vertices, self.edges):
            raise RejectedInputError("graph must be connected")

    @property
    def m(self) -> int:
        return len(self.edges)

    def check_cap(self) -> None:
        if self.m > MAX_EDGES:
            raise ResourceError(f"{self.m} edges exceed the enumeration cap of {MAX_EDGES} (2^{self.m} configurations)")
        if self.n_vertices > MAX_VERTICES:
            raise ResourceError(f"{self.n_vertices} vertices exceed the cap of {MAX_VERTICES}")

    @property
    def graph_hash(self) -> str:
        h = hashlib.sha256(f"{self.n_vertices}:{sorted(self.edges)}".encode()).hexdigest()
        return h[:16]

    @classmethod
    def path(cls, n_edges: int) -> "TinyGraph":
        return cls(n_edges + 1, tuple((i, i + 1) for i in range(n_edges)))

    @classmethod
    def cycle(cls, n: int) -> "TinyGraph":
        return cls(n, tuple((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def grid(cls, lo: int, hi: int) -> tuple["TinyGraph", dict]:
        """Square grid on [lo, hi]²; returns the graph and a coordinate → index map."""
        pts = [(x, y) for y in range(lo, hi + 1) for x in range(lo, hi + 1)]
        index = {pt: i for i, pt in enumerate(pts)}
        edges = []
        for (x, y), i in index.items():
            if (x + 1, y) in index:
                edges.append((i, index[(x + 1, y)]))
            if (x, y + 1) in index:
                edges.append((i, index[(x, y + 1)]))
        return cls(len(pts), tuple(edges)), index

    @property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_vertices)]
        for e, (u, v) in enumerate(self.edges):
            adj[u].append((v, e))
            adj[v].append((u, e))
        return adj


def _connected(n, edges) -> bool:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        parent[find(u)] = find(v)
    return len({find(i) for i in range(n)}) == 1


def random_tiny_graph(rng: np.random.Generator, n_vertices: int, n_edges: int) -> TinyGraph:
    """Connected simple graph: a random spanning tree plus random extra edges."""
    max_edges = n_vertices * (n_vertices - 1) // 2
    if not (n_vertices - 1 <= n_edges <= max_edges):
        raise RejectedInputError("edge count incompatible with a connected simple graph")
    order = rng.permutation(n_vertices)
    edges = set()
    for i in range(1, n_vertices):
        j = int(rng.integers(0, i))
        a, b = int(order[i]), int(order[j])
        edges.add((min(a, b), max(a, b)))
    while len(edges) < n_edges:
        a, b = (int(x) for x in rng.choice(n_vertices, 2, replace=False))
        edges.add((min(a, b), max(a, b)))
    return TinyGraph(n_vertices, tuple(sorted(edges)))


# -------------------------------------------------------------------- events


class Event:
    """An event on Ω = {0,1}^E, given by its indicator over all configurations."""

    increasing = True

    def indicator(self, graph: TinyGraph) -> np.ndarray:
        raise NotImplementedError

    def witnesses(self, graph: TinyGraph) -> np.ndarray:
        """Minimal witness masks (connection events only)."""
        raise RejectedInputError(f"{self!r} has no path witnesses")


@dataclass(frozen=True)
class EdgeOpen(Event):
    e: int

    def indicator(self, graph):
        _edge_check(graph, self.e)
        c = np.arange(1 << graph.m, dtype=np.int64)
        return ((c >> self.e) & 1).astype(bool)

    def witnesses(self, graph):
        _edge_check(graph, self.e)
        return np.array([1 << self.e], dtype=np.int64)


@dataclass(frozen=True)
class Connect(Event):
    u: int
    v: int

    def indicator(self, graph):
        lab = component_labels(graph)
        return lab[:, self.u] == lab[:, self.v]

    def witnesses(self, graph):
        return simple_path_masks(graph, self.u, {self.v})


@dataclass(frozen=True)
class ConnectSet(Event):
    u: int
    targets: frozenset

    def __init__(self, u: int, targets):
        object.__setattr__(self, "u", int(u))
        object.__setattr__(self, "targets", frozenset(int(t) for t in targets))
        if not self.targets:
            raise RejectedInputError("ConnectSet needs a nonempty target set")

    def indicator(self, graph):
        lab = component_labels(graph)
        out = np.zeros(lab.shape[0], dtype=bool)
        for t in self.targets:
            out |= lab[:, self.u] == lab[:, t]
        return out

    def witnesses(self, graph):
        return simple_path_masks(graph, self.u, set(self.targets))


@dataclass(frozen=True)
class Intersection(Event):
    a: Event
    b: Event

    def indicator(self, graph):
        return self.a.indicator(graph) & self.b.indicator(graph)


@dataclass(frozen=True)
class CustomEvent(Event):
    """Arbitrary indicator; monotonicity is checked before use."""

    mask: tuple

    def __init__(self, indicator: Sequence[bool]):
        object.__setattr__(self, "mask", tuple(bool(x) for x in indicator))

    def indicator(self, graph):
        arr = np.array(self.mask, dtype=bool)
        if arr.shape[0] != 1 << graph.m:
            raise RejectedInputError("custom indicator has the wrong length")
        return arr


def _edge_check(graph, e):
    if not (0 <= e < graph.m):
        raise RejectedInputError(f"edge {e} out of range")


# ------------------------------------------------------------ enumeration


@nb.njit(cache=True)
def _labels_kernel(n, eu, ev):
    m = eu.shape[0]
    total = 1 << m
    out = np.empty((total, n), dtype=np.int8)
    parent = np.empty(n, dtype=np.int64)
    for c in range(total):
        for i in range(n):
            parent[i] = i
        for e in range(m):
            if (c >> e) & 1:
                a = eu[e]
                while parent[a] != a:
                    a = parent[a]
                b = ev[e]
                while parent[b] != b:
                    b = parent[b]
                if a != b:
                    if a < b:
                        parent[b] = a
                    else:
                        parent[a] = b
        for i in range(n):
            r = i
            while parent[r] != r:
                r = parent[r]
            out[c, i] = r
    return out


_LABEL_CACHE: dict = {}


def component_labels(graph: TinyGraph) -> np.ndarray:
    """(2^m, n) array: smallest vertex of each vertex's open cluster, per configuration."""
    graph.check_cap()
    key = (graph.n_vertices, graph.edges)
    hit = _LABEL_CACHE.get(key)
    if hit is None:
        eu = np.array([u for u, _ in graph.edges], dtype=np.int64)
        ev = np.array([v for _, v in graph.edges], dtype=np.int64)
        hit = _labels_kernel(graph.n_vertices, eu, ev)
        if len(_LABEL_CACHE) > 8:
            _LABEL_CACHE.clear()
        _LABEL_CACHE[key] = hit
    return hit


@nb.njit(cache=True)
def _up_close(f, m):
    for e in range(m):
        bit = 1 << e
        for c in range(f.shape[0]):
            if c & bit and f[c ^ bit]:
                f[c] = True
    return f


def up_closure(masks: np.ndarray, m: int) -> np.ndarray:
    """Indicator of {ω : ω ⊇ some mask}."""
    f = np.zeros(1 << m, dtype=np.bool_)
    if masks.size:
        f[np.asarray(masks, dtype=np.int64)] = True
    return _up_close(f, m)


def simple_path_masks(graph: TinyGraph, src: int, targets: set, open_mask: int | None = None) -> np.ndarray:
    """Edge masks of all simple paths from ``src`` to a target (optionally within open edges)."""
    adj = graph.adjacency
    out: list[int] = []
    if src in targets:
        return np.array([0], dtype=np.int64)
    visited = [False] * graph.n_vertices

    def dfs(v, mask):
        if v in targets:
            out.append(mask)
            return
        visited[v] = True
        for w, e in adj[v]:
            if not visited[w] and (open_mask is None or (open_mask >> e) & 1):
                dfs(w, mask | (1 << e))
        visited[v] = False

    dfs(src, 0)
    return np.array(sorted(set(out)), dtype=np.int64)


def is_increasing(ind: np.ndarray, m: int) -> bool:
    c = np.arange(ind.shape[0], dtype=np.int64)
    for e in range(m):
        bit = 1 << e
        low = c[(c & bit) == 0]
        if np.any(ind[low] & ~ind[low | bit]):
            return False
    return True


def _open_counts(m: int) -> np.ndarray:
    c = np.arange(1 << m, dtype=np.uint32)
    return np.bitwise_count(c).astype(np.int64) if hasattr(np, "bitwise_count") else np.array([bin(x).count("1") for x in c])


def _poly_counts(ind: np.ndarray, m: int) -> np.ndarray:
    return np.bincount(_open_counts(m)[ind], minlength=m + 1)


def prob_from_indicator(ind: np.ndarray, m: int, p):
    counts = _poly_counts(ind, m)
    if isinstance(p, Fraction):
        q = 1 - p
        return sum(int(counts[k]) * p**k * q ** (m - k) for k in range(m + 1) if counts[k])
    p = float(p)
    k = np.arange(m + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(counts > 0, counts * np.power(p, k) * np.power(1 - p, m - k), 0.0)
    return float(w.sum())


def _as_p(p, rational: bool):
    if rational:
        return p if isinstance(p, Fraction) else Fraction(str(p))
    return float(p)


def _check_p(p):
    if not (0 <= p <= 1):
        raise RejectedInputError(f"p must lie in [0, 1], got {p}")


def exact_prob(graph: TinyGraph, event: Event, p, rational: bool = False):
    """P_p(event) by full enumeration; a ``Fraction`` when ``rational`` or ``p`` is one."""
    graph.check_cap()
    _check_p(p)
    rational = rational or isinstance(p, Fraction)
    return prob_from_indicator(event.indicator(graph), graph.m, _as_p(p, rational))


def indicator_via_paths(graph: TinyGraph, event: Event) -> np.ndarray:
    """Independent route to a connection indicator: up-closure of simple-path masks."""
    graph.check_cap()
    return up_closure(event.witnesses(graph), graph.m)


def cluster_count_distribution(graph: TinyGraph, p, rational: bool = False) -> dict[int, object]:
    """P(number of open clusters == c) for every c."""
    lab = component_labels(graph)
    n_comp = (lab == np.arange(graph.n_vertices, dtype=np.int8)[None, :]).sum(axis=1)
    pp = _as_p(p, rational or isinstance(p, Fraction))
    return {int(c): prob_from_indicator(n_comp == c, graph.m, pp) for c in np.unique(n_comp)}


# ---------------------------------------------------------- disjoint occurrence


def disjoint_indicator(graph: TinyGraph, a: Event, b: Event, chunk: int = 2048) -> np.ndarray:
    """Indicator of A∘B: edge-disjoint path witnesses for both events exist."""
    graph.check_cap()
    wa = a.witnesses(graph)
    wb = b.witnesses(graph)
    unions: list[np.ndarray] = []
    for i in range(0, wa.shape[0], chunk):
        blk = wa[i : i + chunk]
        ok = (blk[:, None] & wb[None, :]) == 0
        u = (blk[:, None] | wb[None, :])[ok]
        if u.size:
            unions.append(np.unique(u))
    masks = np.unique(np.concatenate(unions)) if unions else np.zeros(0, np.int64)
    return up_closure(masks, graph.m)


def disjoint_occurrence_prob(graph: TinyGraph, a: Event, b: Event, p, rational: bool = False):
    _check_p(p)
    rational = rational or isinstance(p, Fraction)
    return prob_from_indicator(disjoint_indicator(graph, a, b), graph.m, _as_p(p, rational))


def in_disjoint_occurrence(graph: TinyGraph, open_edges: set[int], a: Event, b: Event) -> bool:
    """Decide ω ∈ A∘B for one configuration (no edge cap).

    Tries every simple open witness path for A and looks for a witness of B in
    the open edges it leaves unused.
    """
    open_mask = 0
    for e in open_edges:
        _edge_check(graph, e)
        open_mask |= 1 << e
    for wa in _open_witnesses(graph, a, open_mask):
        if _open_witnesses(graph, b, open_mask & ~wa, first_only=True):
            return True
    return False


def _open_witnesses(graph, event, open_mask, first_only=False):
    if isinstance(event, EdgeOpen):
        return [1 << event.e] if (open_mask >> event.e) & 1 else []
    if isinstance(event, Connect):
        src, tg = event.u, {event.v}
    elif isinstance(event, ConnectSet):
        src, tg = event.u, set(event.targets)
    else:
        raise RejectedInputError("A∘B is defined here for connection events only")
    if first_only:
        return [1] if _reachable(graph, src, tg, open_mask) else []
    return [int(x) for x in simple_path_masks(graph, src, tg, open_mask)]


def _reachable(graph, src, targets, open_mask):
    adj = graph.adjacency
    seen = {src}
    stack = [src]
    while stack:
        v = stack.pop()
        if v in targets:
            return True
        for w, e in adj[v]:
            if (open_mask >> e) & 1 and w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def figure_configurations():
    """The two 5x5 grid configurations of the disjoint-occurrence illustration.

    Returns ``(graph, u, v, w, left_open, right_open)``.  Both configurations
    connect u to v and v to w; only the left one has edge-disjoint witnesses.
    """
    graph, idx = TinyGraph.grid(-2, 2)
    eid = {}
    for e, (a, b) in enumerate(graph.edges):
        eid[frozenset((a, b))] = e

    def path(*pts):
        out = set()
        for s, t in zip(pts, pts[1:]):
            (x0, y0), (x1, y1) = s, t
            steps = max(abs(x1 - x0), abs(y1 - y0))
            dx, dy = (x1 - x0) // steps, (y1 - y0) // steps
            for i in range(steps):
                a = idx[(x0 + i * dx, y0 + i * dy)]
                b = idx[(x0 + (i + 1) * dx, y0 + (i + 1) * dy)]
                out.add(eid[frozenset((a, b))])
        return out

    left = path((-2, -2), (-1, -2), (-1, 1), (0, 1), (0, 0), (1, 0), (1, -1), (2, -1), (2, 0)) | path((-1, -1), (1, -1))
    right = (
        path((-2, -2), (-1, -2), (-1, 0), (0, 0), (0, 1))
        | path((0, 0), (2, 0))
        | path((-1, -1), (2, -1), (2, 0))
    )
    return graph, idx[(-2, -2)], idx[(0, 1)], idx[(2, 0)], left, right


# ------------------------------------------------------------------ checks


def _report(check, graph, p, lhs, rhs, margin, ok, **extra):
    return dict(check=check, graph_hash=graph.graph_hash, p=float(p), lhs=float(lhs), rhs=float(rhs),
                margin=float(margin), verdict="pass" if ok else "fail", **extra)


def _require_increasing(graph, event, ind):
    if not is_increasing(ind, graph.m):
        raise RejectedInputError(f"event {event!r} is not increasing")


def check_fkg(graph: TinyGraph, a: Event, b: Event, p_grid: Sequence[float], rational: bool = False) -> list[dict]:
    """P(A∩B) − P(A)P(B) at every grid point (non-negative for increasing events)."""
    graph.check_cap()
    ia, ib = a.indicator(graph), b.indicator(graph)
    _require_increasing(graph, a, ia)
    _require_increasing(graph, b, ib)
    out = []
    for p in p_grid:
        _check_p(p)
        pp = _as_p(p, rational)
        lhs = prob_from_indicator(ia & ib, graph.m, pp)
        rhs = prob_from_indicator(ia, graph.m, pp) * prob_from_indicator(ib, graph.m, pp)
        margin = lhs - rhs
        ok = margin >= 0 if rational else margin >= -1e-12
        out.append(_report("fkg", graph, p, lhs, rhs, margin, ok))
    return out


def check_bk(graph: TinyGraph, a: Event, b: Event, p_grid: Sequence[float], rational: bool = False) -> list[dict]:
    """P(A∘B) − P(A)P(B) at every grid point (non-positive by the BK inequality)."""
    graph.check_cap()
    ia, ib = a.indicator(graph), b.indicator(graph)
    iab = disjoint_indicator(graph, a, b)
    out = []
    for p in p_grid:
        _check_p(p)
        pp = _as_p(p, rational)
        lhs = prob_from_indicator(iab, graph.m, pp)
        rhs = prob_from_indicator(ia, graph.m, pp) * prob_from_indicator(ib, graph.m, pp)
        margin = lhs - rhs
        ok = margin <= 0 if rational else margin <= 1e-12
        out.append(_report("bk", graph, p, lhs, rhs, margin, ok))
    return out


def pivotal_sum(graph: TinyGraph, ind: np.ndarray, p):
    """Σ_e P_p(e is pivotal for the event)."""
    m = graph.m
    c = np.arange(1 << m, dtype=np.int64)
    total = 0 if isinstance(p, Fraction) else 0.0
    for e in range(m):
        bit = 1 << e
        piv = ind[c | bit] & ~ind[c & ~bit]
        # piv does not depend on bit e; count each pair once, weight by the other edges
        piv_low = piv & ((c & bit) == 0)
        counts = np.bincount(_open_counts(m)[piv_low], minlength=m + 1)
        if isinstance(p, Fraction):
            total += sum(int(counts[k]) * p**k * (1 - p) ** (m - 1 - k) for k in range(m) if counts[k])
        else:
            k = np.arange(m)
            total += float((counts[:m] * np.power(p, k) * np.power(1 - p, m - 1 - k)).sum())
    return total


def russo_check(graph: TinyGraph, a: Event, p, h, rational: bool = False, halvings: int = 2, tol: float = 1e-5) -> dict:
    """Central difference of P_p(A) against the pivotal sum.

    Also reports the residual under repeated halving of ``h`` and the
    observed convergence order ``log2(r(h)/r(h/2))``.
    """
    graph.check_cap()
    ind = a.indicator(graph)
    _require_increasing(graph, a, ind)
    if not (0 < h and 0 <= p - h and p + h <= 1):
        raise RejectedInputError("need 0 < h with [p-h, p+h] inside [0, 1]")
    rational = rational or isinstance(p, Fraction) or isinstance(h, Fraction)
    pp, hh = _as_p(p, rational), _as_p(h, rational)
    piv = pivotal_sum(graph, ind, pp)
    residuals = []
    cur = hh
    for _ in range(halvings + 1):
        d = (prob_from_indicator(ind, graph.m, pp + cur) - prob_from_indicator(ind, graph.m, pp - cur)) / (2 * cur)
        residuals.append(d - piv)
        cur = cur / 2
    orders = []
    for r0, r1 in zip(residuals, residuals[1:]):
        if r1 != 0 and r0 != 0:
            orders.append(math.log2(abs(float(r0)) / abs(float(r1))))
    first = residuals[0]
    deriv = piv + first
    rep = _report("russo", graph, p, deriv, piv, first, abs(float(first)) <= tol, h=float(h),
                  residuals=[float(r) for r in residuals], orders=orders)
    return rep


def bk_barrier_check(ball, A, B, p: float, trials: int | None = None, seed: int = 0, chi: float | None = None,
                     threads=None, sigmas: float = 3.0) -> dict:
    """E[#(C(id)∩A)] ≤ E[#(C(id)∩B)]·χ_p, given that B separates id from A.

    ``trials=None`` evaluates both expectations exactly on a tree
    (τ_p(g) = p^|g|); otherwise Monte Carlo with a ``sigmas`` margin.
    """
    from .barriers import is_barrier
    from .groups import FreeGroup
    from .percolation import chi_tree_closed_form, known_pc, set_counts

    ai = ball.indices(A) if not isinstance(A, np.ndarray) else np.unique(A)
    bi = ball.indices(B) if not isinstance(B, np.ndarray) else np.unique(B)
    a_rest = np.setdiff1d(ai, bi)
    ok_barrier, path = is_barrier(ball, bi, 0, a_rest) if a_rest.size else (True, None)
    if not ok_barrier:
        raise RejectedInputError(f"B is not a barrier between id and A (avoiding path of length {len(path) - 1})")
    tree = isinstance(ball.pres, FreeGroup)
    if chi is None:
        if tree:
            chi = chi_tree_closed_form(p, ball.pres.rank)
        else:
            from .percolation import susceptibility

            chi = susceptibility(ball, p, trials or 1000, seed, threads).value
    if trials is None:
        if not tree:
            raise RejectedInputError("exact mode needs a tree ball; pass trials for Monte Carlo")
        lhs = float(np.sum(np.power(p, ball.norms[ai])))
        eb = float(np.sum(np.power(p, ball.norms[bi])))
        rhs = eb * chi
        return dict(check="bk_barrier", mode="exact", p=p, lhs=lhs, rhs=rhs, margin=lhs - rhs, chi=chi,
                    verdict="pass" if lhs <= rhs + 1e-12 else "fail")
    ca, cb = set_counts(ball, p, trials, seed, [ai, bi], threads)
    d = ca - chi * cb
    mean = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return dict(check="bk_barrier", mode="monte_carlo", p=p, lhs=float(ca.mean()), rhs=float(cb.mean() * chi),
                margin=mean, std_error=se, trials=trials, seed=seed, chi=chi,
                verdict="pass" if mean <= sigmas * se else "fail")
