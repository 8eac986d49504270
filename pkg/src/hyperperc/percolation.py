"""Bernoulli bond percolation on Cayley balls and Monte Carlo estimators.

All randomness goes through :mod:`hyperperc.rng`, so an edge's state in a
given trial is fixed by ``(seed, trial, edge key)``.  Per-trial results are
written to arrays and reduced in trial order, which makes every estimate
independent of the thread count.

Two graph back ends are supported:

* ``CayleyBall``: explicit CSR adjacency, any presentation.
* ``TreeBall``: implicit Cayley tree of a free group, walked lazily.  Keys
  match the explicit ball, so both back ends see the same configurations.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numba as nb
import numpy as np

from .errors import RejectedInputError, ResourceError
from .groups import CayleyBall, FreeGroup, GroupElement, Presentation, TreeBall, letter_code, parse_presentation
from .rng import ROOT_KEY, child_key, lane_key, seed_to_u64, stream_key, uniform, uniforms

DEFAULT_MAX_EXPLORED = 50_000_000


# --------------------------------------------------------------------- types


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    trials: int
    seed: int
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_samples(cls, xs: np.ndarray, seed: int, **meta) -> "Estimate":
        xs = np.asarray(xs, dtype=np.float64)
        n = xs.shape[0]
        if n == 0:
            raise RejectedInputError("trials must be positive")
        sd = float(xs.std(ddof=1)) if n > 1 else 0.0
        return cls(float(xs.mean()), sd / math.sqrt(n), int(n), int(seed), meta)

    def within(self, target: float, sigmas: float = 3.0, floor: float = 0.0) -> bool:
        return abs(self.value - target) <= sigmas * self.std_error + floor


@dataclass(frozen=True)
class PercSample:
    p: float
    seed: int
    trial: int
    open: np.ndarray  # bool per edge

    @classmethod
    def from_bits(cls, bits: Sequence[int] | str, p: float = float("nan"), seed: int = 0) -> "PercSample":
        if isinstance(bits, str):
            bits = [int(c) for c in bits if c in "01"]
        return cls(p, seed, 0, np.asarray(bits, dtype=bool))


@dataclass(frozen=True)
class ClusterPartition:
    parent: np.ndarray
    rank: np.ndarray
    labels: np.ndarray  # cluster id per vertex, numbered by first vertex
    sizes: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.sizes.shape[0])

    def members(self, cid: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cid)

    def same(self, u: int, v: int) -> bool:
        return bool(self.labels[u] == self.labels[v])

    def groups(self) -> list[list[int]]:
        return [self.members(c).tolist() for c in range(self.n_clusters)]


def _check_p(p: float) -> float:
    p = float(p)
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise RejectedInputError(f"p must lie in [0, 1], got {p}")
    return p


def _check_trials(trials: int) -> int:
    if int(trials) < 1:
        raise RejectedInputError("trials must be positive")
    return int(trials)


def known_pc(pres: Presentation) -> float | None:
    """Critical parameter where it is known in closed form."""
    if isinstance(pres, FreeGroup):
        return 1.0 / (2 * pres.rank - 1)
    lit = pres.literal
    if lit == "lattice:1":
        return 1.0
    if lit == "lattice:2":
        return 0.5
    return None


def _threads(threads: int | None) -> int:
    if threads is None or threads <= 0:
        return 1
    return max(1, min(int(threads), nb.config.NUMBA_NUM_THREADS))


# ------------------------------------------------------------------- kernels


@nb.njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@nb.njit(cache=True)
def _union(parent, rank, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return
    if rank[ra] < rank[rb]:
        parent[ra] = rb
    elif rank[ra] > rank[rb]:
        parent[rb] = ra
    else:
        parent[rb] = ra
        rank[ra] += 1


@nb.njit(cache=True)
def _uf_bits(nv, eu, ev, is_open, parent, rank):
    for i in range(nv):
        parent[i] = i
        rank[i] = 0
    for e in range(eu.shape[0]):
        if is_open[e]:
            _union(parent, rank, eu[e], ev[e])


@nb.njit(cache=True)
def _uf_stream(nv, eu, ev, ekeys, stream, p, parent, rank):
    for i in range(nv):
        parent[i] = i
        rank[i] = 0
    for e in range(eu.shape[0]):
        if uniform(stream, ekeys[e]) < p:
            _union(parent, rank, eu[e], ev[e])
    for i in range(nv):
        _find(parent, i)


@nb.njit(cache=True)
def _bfs(indptr, nbr, nbr_edge, ekeys, stream, p, src, stamp, epoch, queue):
    stamp[src] = epoch
    queue[0] = src
    head = 0
    tail = 1
    while head < tail:
        u = queue[head]
        head += 1
        for idx in range(indptr[u], indptr[u + 1]):
            v = nbr[idx]
            if stamp[v] != epoch:
                if uniform(stream, ekeys[nbr_edge[idx]]) < p:
                    stamp[v] = epoch
                    queue[tail] = v
                    tail += 1
    return tail


@nb.njit(cache=True, parallel=True)
def _ball_cluster_kernel(indptr, nbr, nbr_edge, ekeys, norms, radius, p, seed, trials, src, nchunks):
    nv = norms.shape[0]
    shells = np.zeros((trials, radius + 1), dtype=np.int64)
    hits = np.zeros((nchunks, nv), dtype=np.int64)
    for c in nb.prange(nchunks):
        stamp = np.zeros(nv, dtype=np.int64)
        queue = np.empty(nv, dtype=np.int64)
        epoch = 0
        for t in range(c, trials, nchunks):
            epoch += 1
            stream = stream_key(seed, t)
            n = _bfs(indptr, nbr, nbr_edge, ekeys, stream, p, src, stamp, epoch, queue)
            for i in range(n):
                v = queue[i]
                shells[t, norms[v]] += 1
                hits[c, v] += 1
    return shells, hits.sum(axis=0)


@nb.njit(cache=True, parallel=True)
def _tree_cluster_kernel(ncodes, radius, p, seed, trials, nchunks, max_explored):
    """Per-trial, per-depth cluster counts of the identity in the implicit tree."""
    shells = np.zeros((trials, radius + 1), dtype=np.int64)
    overflow = np.zeros(trials, dtype=np.bool_)
    for c in nb.prange(nchunks):
        cap = radius * ncodes + 2
        skey = np.empty(cap, dtype=np.uint64)
        slast = np.empty(cap, dtype=np.int64)
        sdepth = np.empty(cap, dtype=np.int64)
        for t in range(c, trials, nchunks):
            stream = stream_key(seed, t)
            top = 0
            skey[0] = ROOT_KEY
            slast[0] = 0
            sdepth[0] = 0
            top = 1
            explored = 0
            while top > 0:
                top -= 1
                k = skey[top]
                last = slast[top]
                d = sdepth[top]
                shells[t, d] += 1
                explored += 1
                if explored > max_explored:
                    overflow[t] = True
                    break
                if d == radius:
                    continue
                for code in range(1, ncodes + 1):
                    # inverse of code: 1<->2, 3<->4, ...
                    inv = code + 1 if code % 2 == 1 else code - 1
                    if last == inv:
                        continue
                    ck = child_key(k, code)
                    if uniform(stream, ck) < p:
                        skey[top] = ck
                        slast[top] = code
                        sdepth[top] = d + 1
                        top += 1
    return shells, overflow


@nb.njit(cache=True)
def _heap_push(hv, hk, hl, hd, size, v, k, last, d):
    i = size
    hv[i] = v
    hk[i] = k
    hl[i] = last
    hd[i] = d
    while i > 0:
        par = (i - 1) // 2
        if hv[par] <= hv[i]:
            break
        hv[par], hv[i] = hv[i], hv[par]
        hk[par], hk[i] = hk[i], hk[par]
        hl[par], hl[i] = hl[i], hl[par]
        hd[par], hd[i] = hd[i], hd[par]
        i = par
    return size + 1


@nb.njit(cache=True)
def _heap_pop(hv, hk, hl, hd, size):
    size -= 1
    hv[0] = hv[size]
    hk[0] = hk[size]
    hl[0] = hl[size]
    hd[0] = hd[size]
    i = 0
    while True:
        lft = 2 * i + 1
        rgt = lft + 1
        m = i
        if lft < size and hv[lft] < hv[m]:
            m = lft
        if rgt < size and hv[rgt] < hv[m]:
            m = rgt
        if m == i:
            break
        hv[m], hv[i] = hv[i], hv[m]
        hk[m], hk[i] = hk[i], hk[m]
        hl[m], hl[i] = hl[i], hl[m]
        hd[m], hd[i] = hd[i], hd[m]
        i = m
    return size


@nb.njit(cache=True, parallel=True)
def _tree_bottleneck_kernel(ncodes, radius, seed, trials, nchunks):
    """Smallest p at which the identity connects to the depth-``radius`` sphere."""
    out = np.empty(trials, dtype=np.float64)
    for c in nb.prange(nchunks):
        cap = 1024
        hv = np.empty(cap, dtype=np.float64)
        hk = np.empty(cap, dtype=np.uint64)
        hl = np.empty(cap, dtype=np.int64)
        hd = np.empty(cap, dtype=np.int64)
        for t in range(c, trials, nchunks):
            stream = stream_key(seed, t)
            size = _heap_push(hv, hk, hl, hd, 0, 0.0, ROOT_KEY, 0, 0)
            ans = 1.0
            while size > 0:
                v = hv[0]
                k = hk[0]
                last = hl[0]
                d = hd[0]
                size = _heap_pop(hv, hk, hl, hd, size)
                if d == radius:
                    ans = v
                    break
                if size + ncodes >= cap:
                    cap *= 2
                    nv_ = np.empty(cap, dtype=np.float64)
                    nk_ = np.empty(cap, dtype=np.uint64)
                    nl_ = np.empty(cap, dtype=np.int64)
                    nd_ = np.empty(cap, dtype=np.int64)
                    nv_[:size] = hv[:size]
                    nk_[:size] = hk[:size]
                    nl_[:size] = hl[:size]
                    nd_[:size] = hd[:size]
                    hv, hk, hl, hd = nv_, nk_, nl_, nd_
                for code in range(1, ncodes + 1):
                    inv = code + 1 if code % 2 == 1 else code - 1
                    if last == inv:
                        continue
                    ck = child_key(k, code)
                    u = uniform(stream, ck)
                    size = _heap_push(hv, hk, hl, hd, size, max(v, u), ck, code, d + 1)
            out[t] = ans
    return out


@nb.njit(cache=True, parallel=True)
def _ball_bottleneck_kernel(indptr, nbr, nbr_edge, ekeys, norms, radius, seed, trials, nchunks):
    nv = norms.shape[0]
    out = np.empty(trials, dtype=np.float64)
    for c in nb.prange(nchunks):
        best = np.empty(nv, dtype=np.float64)
        cap = 4 * indptr[nv] + 4
        hv = np.empty(cap, dtype=np.float64)
        hk = np.empty(cap, dtype=np.uint64)
        hl = np.empty(cap, dtype=np.int64)
        hd = np.empty(cap, dtype=np.int64)
        for t in range(c, trials, nchunks):
            stream = stream_key(seed, t)
            best[:] = 2.0
            best[0] = 0.0
            size = _heap_push(hv, hk, hl, hd, 0, 0.0, np.uint64(0), 0, 0)
            ans = 1.0
            while size > 0:
                v = hv[0]
                u = hl[0]
                size = _heap_pop(hv, hk, hl, hd, size)
                if v > best[u]:
                    continue
                if norms[u] == radius:
                    ans = v
                    break
                for idx in range(indptr[u], indptr[u + 1]):
                    w = nbr[idx]
                    val = max(v, uniform(stream, ekeys[nbr_edge[idx]]))
                    if val < best[w]:
                        best[w] = val
                        size = _heap_push(hv, hk, hl, hd, size, val, np.uint64(0), w, 0)
            out[t] = ans
    return out


@nb.njit(cache=True, parallel=True)
def _triangle_kernel(indptr, nbr, nbr_edge, eu, ev, ekeys, p, seed, trials, src, nchunks):
    nv = indptr.shape[0] - 1
    out = np.zeros(trials, dtype=np.float64)
    for c in nb.prange(nchunks):
        stamp = np.zeros(nv, dtype=np.int64)
        queue = np.empty(nv, dtype=np.int64)
        parent = np.empty(nv, dtype=np.int64)
        rank = np.empty(nv, dtype=np.int64)
        acc1 = np.zeros(nv, dtype=np.int64)
        acc3 = np.zeros(nv, dtype=np.int64)
        epoch = 0
        for t in range(c, trials, nchunks):
            base = stream_key(seed, t)
            s1 = lane_key(base, 1)
            s2 = lane_key(base, 2)
            s3 = lane_key(base, 3)
            _uf_stream(nv, eu, ev, ekeys, s2, p, parent, rank)
            epoch += 1
            n1 = _bfs(indptr, nbr, nbr_edge, ekeys, s1, p, src, stamp, epoch, queue)
            for i in range(n1):
                acc1[parent[queue[i]]] += 1
            epoch += 1
            n3 = _bfs(indptr, nbr, nbr_edge, ekeys, s3, p, src, stamp, epoch, queue)
            total = 0.0
            for i in range(n3):
                r = parent[queue[i]]
                acc3[r] += 1
            for i in range(n3):
                r = parent[queue[i]]
                if acc3[r] > 0:
                    total += acc1[r] * acc3[r]
                    acc3[r] = 0
            epoch += 1
            n1 = _bfs(indptr, nbr, nbr_edge, ekeys, s1, p, src, stamp, epoch, queue)
            for i in range(n1):
                acc1[parent[queue[i]]] = 0
            out[t] = total
    return out


@nb.njit(cache=True, parallel=True)
def _iota_kernel(eu, ev, ekeys, nv, in_a, p, seed, trials, nchunks):
    pairs = np.zeros(trials, dtype=np.float64)
    root_size = np.zeros(trials, dtype=np.float64)
    for c in nb.prange(nchunks):
        parent = np.empty(nv, dtype=np.int64)
        rank = np.empty(nv, dtype=np.int64)
        cnt = np.zeros(nv, dtype=np.int64)
        for t in range(c, trials, nchunks):
            stream = stream_key(seed, t)
            _uf_stream(nv, eu, ev, ekeys, stream, p, parent, rank)
            for v in range(nv):
                if in_a[v]:
                    cnt[parent[v]] += 1
            s = 0.0
            for v in range(nv):
                if cnt[v] > 0:
                    s += cnt[v] * cnt[v]
                    cnt[v] = 0
            r0 = parent[0]
            sz = 0
            for v in range(nv):
                if parent[v] == r0:
                    sz += 1
            pairs[t] = s
            root_size[t] = sz
    return pairs, root_size


@nb.njit(cache=True, parallel=True)
def _ninf_kernel(eu, ev, ekeys, norms, core_radius, radius, p, seed, trials, nchunks):
    nv = norms.shape[0]
    out = np.zeros(trials, dtype=np.float64)
    for c in nb.prange(nchunks):
        parent = np.empty(nv, dtype=np.int64)
        rank = np.empty(nv, dtype=np.int64)
        flag = np.zeros(nv, dtype=np.int8)
        for t in range(c, trials, nchunks):
            stream = stream_key(seed, t)
            _uf_stream(nv, eu, ev, ekeys, stream, p, parent, rank)
            for v in range(nv):
                if norms[v] <= core_radius:
                    flag[parent[v]] |= 1
                if norms[v] == radius:
                    flag[parent[v]] |= 2
            k = 0
            for v in range(nv):
                if flag[v] == 3:
                    k += 1
                flag[v] = 0
            out[t] = k
    return out


# ----------------------------------------------------------------- sampling


def _edge_keys(ball) -> np.ndarray:
    keys = getattr(ball, "edge_keys", None)
    if keys is None:
        raise RejectedInputError("sampling needs a graph with per-edge keys")
    return keys


def sample(ball: CayleyBall, p: float, seed: int, trial: int = 0) -> PercSample:
    """One seeded Bernoulli(p) configuration over the edges of ``ball``."""
    p = _check_p(p)
    stream = stream_key(seed_to_u64(seed), np.uint64(trial))
    u = uniforms(np.uint64(stream), _edge_keys(ball))
    return PercSample(p, int(seed), int(trial), u < p)


def clusters(graph, sample: PercSample) -> ClusterPartition:
    """Union-find partition of the vertices by open-edge connectivity.

    ``graph`` is anything with ``n_vertices`` and an ``edges`` array whose
    first two columns are endpoints (a ``CayleyBall`` or ``TinyGraph``).
    """
    edges = np.asarray(graph.edges, dtype=np.int64)
    if edges.size == 0:
        edges = edges.reshape(0, 2)
    bits = np.asarray(sample.open, dtype=bool)
    if bits.shape[0] != edges.shape[0]:
        raise RejectedInputError(f"sample has {bits.shape[0]} bits but the graph has {edges.shape[0]} edges")
    nv = int(graph.n_vertices)
    parent = np.empty(nv, np.int64)
    rank = np.empty(nv, np.int64)
    _uf_bits(nv, edges[:, 0].copy(), edges[:, 1].copy(), bits, parent, rank)
    roots = _roots(parent)
    _, first, inv = np.unique(roots, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    relabel = np.empty_like(order)
    relabel[order] = np.arange(order.shape[0])
    labels = relabel[inv]
    sizes = np.bincount(labels, minlength=order.shape[0])
    return ClusterPartition(parent, rank, labels.astype(np.int64), sizes.astype(np.int64))


@nb.njit(cache=True)
def _roots(parent):
    out = np.empty(parent.shape[0], dtype=np.int64)
    for i in range(parent.shape[0]):
        out[i] = _find(parent, i)
    return out


# --------------------------------------------------------------- estimators


def _resolve_tree(ball):
    if isinstance(ball, TreeBall):
        return ball
    return None


def _cluster_runs(ball: CayleyBall, p: float, trials: int, seed: int, src: int = 0, threads=None):
    n = _threads(threads)
    return _ball_cluster_kernel(
        ball.indptr, ball.nbr, ball.nbr_edge, ball.edge_keys, ball.norms, ball.radius, p,
        seed_to_u64(seed), trials, src, n,
    )


def _tree_runs(tb: TreeBall, p: float, trials: int, seed: int, threads=None, max_explored=DEFAULT_MAX_EXPLORED):
    shells, overflow = _tree_cluster_kernel(
        2 * tb.pres.rank, tb.radius, p, seed_to_u64(seed), trials, _threads(threads), max_explored
    )
    if overflow.any():
        raise ResourceError(
            f"a cluster exceeded {max_explored} explored vertices at p={p}, radius {tb.radius}; "
            "lower p or the radius"
        )
    return shells


def cluster_hit_counts(ball: CayleyBall, p: float, trials: int, seed: int, threads=None) -> np.ndarray:
    """Number of trials in which each vertex lies in the identity's cluster."""
    p = _check_p(p)
    _, hits = _cluster_runs(ball, p, _check_trials(trials), seed, threads=threads)
    return hits


def two_point(ball: CayleyBall, p: float, g: GroupElement, trials: int, seed: int, threads=None) -> Estimate:
    """Monte Carlo estimate of P(id <-> g) inside the ball."""
    p = _check_p(p)
    trials = _check_trials(trials)
    t0 = time.perf_counter()
    idx = ball.index(g)
    stream_hits = _point_indicator(ball, p, trials, seed, idx, threads)
    return Estimate.from_samples(
        stream_hits, seed, quantity="two_point", radius=ball.radius, p=p, element=str(g),
        presentation=ball.pres.literal, wall_time_ms=1e3 * (time.perf_counter() - t0),
    )


@nb.njit(cache=True, parallel=True)
def _point_kernel(indptr, nbr, nbr_edge, ekeys, p, seed, trials, target, nchunks):
    nv = indptr.shape[0] - 1
    out = np.zeros(trials, dtype=np.float64)
    for c in nb.prange(nchunks):
        stamp = np.zeros(nv, dtype=np.int64)
        queue = np.empty(nv, dtype=np.int64)
        epoch = 0
        for t in range(c, trials, nchunks):
            epoch += 1
            _bfs(indptr, nbr, nbr_edge, ekeys, stream_key(seed, t), p, 0, stamp, epoch, queue)
            out[t] = 1.0 if stamp[target] == epoch else 0.0
    return out


def _point_indicator(ball, p, trials, seed, idx, threads):
    return _point_kernel(ball.indptr, ball.nbr, ball.nbr_edge, ball.edge_keys, p, seed_to_u64(seed), trials, idx, _threads(threads))


def two_point_all(ball: CayleyBall, p: float, trials: int, seed: int, threads=None) -> tuple[np.ndarray, np.ndarray]:
    """Estimates of P(id <-> v) for every vertex at once, with binomial standard errors."""
    hits = cluster_hit_counts(ball, p, trials, seed, threads)
    tau = hits / trials
    se = np.sqrt(tau * (1 - tau) / max(trials - 1, 1))
    return tau, se


def susceptibility(ball, p: float, trials: int, seed: int, threads=None) -> Estimate:
    """Mean size of the identity's cluster, truncated to the ball."""
    p = _check_p(p)
    trials = _check_trials(trials)
    pc = known_pc(ball.pres)
    if pc is not None and p >= pc and p > 0:
        warnings.warn(f"p={p} is not below p_c={pc:.4g}; the truncated susceptibility is radius-dominated", stacklevel=2)
    t0 = time.perf_counter()
    tb = _resolve_tree(ball)
    if tb is not None:
        shells = _tree_runs(tb, p, trials, seed, threads)
    else:
        shells, _ = _cluster_runs(ball, p, trials, seed, threads=threads)
    sizes = shells.sum(axis=1)
    return Estimate.from_samples(
        sizes, seed, quantity="susceptibility", radius=ball.radius, p=p, presentation=ball.pres.literal,
        wall_time_ms=1e3 * (time.perf_counter() - t0),
    )


def chi_tree_closed_form(p: float, rank: int = 2) -> float:
    """Untruncated susceptibility of the 2k-regular tree below criticality."""
    q = 2 * rank - 1
    if p * q >= 1:
        return math.inf
    return (1 + p) / (1 - q * p) if rank == 2 else 1 + 2 * rank * p / (1 - q * p)


def chi_tree_truncated(p, radius: int, rank: int = 2):
    """Σ_{n≤R} |S_n| p^n; exact for Fractions."""
    q = 2 * rank - 1
    total = 1 if isinstance(p, Fraction) else 1.0
    term = 2 * rank * p
    for _ in range(1, radius + 1):
        total += term
        term *= q * p
    return total


# ------------------------------------------------------------------ triangle


def triangle_tree_exact(p, radius: int, rank: int = 2):
    """Σ_{h,k ∈ ball(R)} p^{|h| + |h⁻¹k| + |k|} on the 2k-regular tree.

    Pairs (h, k) are grouped by their common prefix u (length j) and the
    remaining branches of lengths m and n, which leave u through distinct
    first letters.  The exponent is then 2(j+m+n).  Exact for Fractions.
    """
    q = 2 * rank - 1
    deg = 2 * rank
    one = Fraction(1) if isinstance(p, Fraction) else 1.0
    p2 = p * p
    pw = [one]
    for _ in range(3 * radius + 1):
        pw.append(pw[-1] * p2)
    qpow = [q**i for i in range(radius + 1)]
    total = 0 * one
    for j in range(radius + 1):
        prefixes = 1 if j == 0 else deg * qpow[j - 1]
        f = deg if j == 0 else q
        top = radius - j
        for m in range(top + 1):
            for n in range(top + 1):
                if m == 0 and n == 0:
                    c = 1
                elif m == 0 or n == 0:
                    c = f * qpow[max(m, n) - 1]
                else:
                    c = f * (f - 1) * qpow[m - 1] * qpow[n - 1]
                total += prefixes * c * pw[j + m + n]
    return total


def triangle_tail_bound(p: float, radius: int, rank: int = 2, tol: float = 1e-18) -> float:
    """Upper bound on ∇ − ∇_R: sum of all untruncated terms with j+m+n > R."""
    q = 2 * rank - 1
    deg = 2 * rank
    if q * p * p >= 1:
        return math.inf

    def layer(s):
        tot = 0.0
        for j in range(s + 1):
            pre = 1 if j == 0 else deg * q ** (j - 1)
            f = deg if j == 0 else q
            for m in range(s - j + 1):
                n = s - j - m
                if m == 0 and n == 0:
                    c = 1
                elif m == 0 or n == 0:
                    c = f * q ** (max(m, n) - 1)
                else:
                    c = f * (f - 1) * q ** (m - 1) * q ** (n - 1)
                tot += pre * c
        return tot * p ** (2 * s)

    total = 0.0
    s = radius + 1
    while True:
        term = layer(s)
        total += term
        if term < tol * max(total, 1e-300) or s > radius + 4000:
            break
        s += 1
    return total


def triangle_diagram(ball, p: float, trials_or_exact="exact", seed: int = 0, threads=None) -> Estimate:
    """Truncated triangle diagram at base point id.

    ``trials_or_exact="exact"`` runs the tree recursion (free groups only) and
    reports ``tail_bound`` in ``meta``.  An integer runs the three-sample
    Monte Carlo estimator on an explicit ball.
    """
    p = _check_p(p)
    t0 = time.perf_counter()
    if isinstance(trials_or_exact, str):
        if trials_or_exact != "exact":
            raise RejectedInputError("trials_or_exact must be 'exact' or a positive trial count")
        if not isinstance(ball.pres, FreeGroup):
            raise RejectedInputError("exact triangle mode needs a free-group (tree) ball")
        val = triangle_tree_exact(p, ball.radius, ball.pres.rank)
        tail = triangle_tail_bound(float(p), ball.radius, ball.pres.rank)
        return Estimate(
            float(val), 0.0, 1, int(seed),
            dict(quantity="triangle", mode="exact", radius=ball.radius, p=float(p), tail_bound=tail,
                 presentation=ball.pres.literal, wall_time_ms=1e3 * (time.perf_counter() - t0)),
        )
    trials = _check_trials(trials_or_exact)
    if not isinstance(ball, CayleyBall):
        raise RejectedInputError("Monte Carlo triangle mode needs an explicit CayleyBall")
    pc = known_pc(ball.pres)
    if pc is not None and p >= pc and p > 0:
        warnings.warn(f"Monte Carlo triangle at p={p} >= p_c={pc:.4g} is dominated by truncation", stacklevel=2)
    vals = _triangle_kernel(
        ball.indptr, ball.nbr, ball.nbr_edge, ball.edges[:, 0].copy(), ball.edges[:, 1].copy(), ball.edge_keys,
        p, seed_to_u64(seed), trials, 0, _threads(threads),
    )
    return Estimate.from_samples(
        vals, seed, quantity="triangle", mode="monte_carlo", radius=ball.radius, p=p,
        presentation=ball.pres.literal, wall_time_ms=1e3 * (time.perf_counter() - t0),
    )


# ---------------------------------------------------------------------- iota


def iota_ratio(ball: CayleyBall, p: float, A, trials: int, seed: int, chi: float | None = None, threads=None) -> Estimate:
    """Σ_{g,h∈A} τ(g,h) / (χ·|A|) by Monte Carlo inside the ball.

    ``chi`` defaults to the truncated susceptibility measured on the same
    configurations; pass a known value to remove that source of noise.
    """
    p = _check_p(p)
    trials = _check_trials(trials)
    idx = _as_indices(ball, A)
    if idx.size == 0:
        raise RejectedInputError("A must be nonempty")
    t0 = time.perf_counter()
    in_a = np.zeros(ball.n_vertices, dtype=np.bool_)
    in_a[idx] = True
    pairs, root = _iota_kernel(
        ball.edges[:, 0].copy(), ball.edges[:, 1].copy(), ball.edge_keys, ball.n_vertices, in_a, p,
        seed_to_u64(seed), trials, _threads(threads),
    )
    na = idx.size
    meta = dict(quantity="iota", radius=ball.radius, p=p, set_size=int(na), presentation=ball.pres.literal)
    if chi is not None:
        xs = pairs / (float(chi) * na)
        meta["wall_time_ms"] = 1e3 * (time.perf_counter() - t0)
        return Estimate.from_samples(xs, seed, chi=float(chi), **meta)
    # ratio of means with a delta-method standard error
    mx, my = pairs.mean(), root.mean()
    val = mx / (my * na)
    if trials > 1:
        cov = np.cov(pairs, root, ddof=1)
        var = (cov[0, 0] / my**2 - 2 * mx * cov[0, 1] / my**3 + mx**2 * cov[1, 1] / my**4) / (na**2 * trials)
        se = math.sqrt(max(var, 0.0))
    else:
        se = 0.0
    meta["wall_time_ms"] = 1e3 * (time.perf_counter() - t0)
    return Estimate(float(val), se, trials, int(seed), dict(meta, chi=float(my)))


def _as_indices(ball: CayleyBall, A) -> np.ndarray:
    if isinstance(A, np.ndarray) and A.dtype.kind in "iu":
        idx = np.unique(A.astype(np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= ball.n_vertices):
            raise RejectedInputError("vertex index out of range")
        return idx
    return ball.indices(A)


def free_word_lcp_matrix(words: Sequence[Sequence[int]]) -> np.ndarray:
    """Pairwise common-prefix lengths of reduced free words."""
    n = len(words)
    L = max((len(w) for w in words), default=0)
    mat = np.zeros((n, max(L, 1)), dtype=np.int16)
    for i, w in enumerate(words):
        mat[i, : len(w)] = w
    lcp = np.zeros((n, n), dtype=np.int64)
    alive = np.ones((n, n), dtype=bool)
    for c in range(L):
        col = mat[:, c]
        same = (col[:, None] == col[None, :]) & (col[:, None] != 0)
        alive &= same
        lcp += alive
    return lcp


def tree_distance_matrix(words: Sequence[Sequence[int]]) -> np.ndarray:
    lens = np.array([len(w) for w in words], dtype=np.int64)
    lcp = free_word_lcp_matrix(words)
    return lens[:, None] + lens[None, :] - 2 * lcp


def iota_tree_exact(p, words: Sequence[Sequence[int]], rank: int = 2, chi=None):
    """Σ_{g,h∈A} p^{d(g,h)} / (χ_p |A|) on the infinite tree."""
    if len(words) == 0:
        raise RejectedInputError("A must be nonempty")
    d = tree_distance_matrix(words)
    if chi is None:
        chi = chi_tree_closed_form(float(p), rank)
    if isinstance(p, Fraction):
        counts = np.bincount(d.ravel())
        s = sum(int(c) * p**k for k, c in enumerate(counts) if c)
        return s / (chi * len(words))
    return float(np.power(float(p), d).sum() / (chi * len(words)))


def iota_sphere_exact(p, k: int, rank: int = 2, chi=None):
    """ι-ratio of the sphere of radius k in the 2r-regular tree (closed sum)."""
    q = 2 * rank - 1
    if k == 0:
        per = 1
    else:
        # from a fixed g: itself, branch points at depth j, and the root branch
        per = 1 + sum((q - 1) * q ** (k - j - 1) * p ** (2 * (k - j)) for j in range(1, k))
        per += (2 * rank - 1) * q ** (k - 1) * p ** (2 * k)
    if chi is None:
        chi = chi_tree_closed_form(float(p), rank) if not isinstance(p, Fraction) else (1 + p) / (1 - q * p)
    return per / chi


# ------------------------------------------------------------- N_infinity


def n_infinity_proxy(ball: CayleyBall, p: float, trials: int, seed: int, core_radius: int, threads=None) -> Estimate:
    """Mean number of distinct clusters meeting both ball(core_radius) and the boundary sphere."""
    p = _check_p(p)
    trials = _check_trials(trials)
    if not (0 <= core_radius < ball.radius):
        raise RejectedInputError("core_radius must satisfy 0 <= core_radius < ball radius")
    t0 = time.perf_counter()
    vals = _ninf_kernel(
        ball.edges[:, 0].copy(), ball.edges[:, 1].copy(), ball.edge_keys, ball.norms, core_radius, ball.radius,
        p, seed_to_u64(seed), trials, _threads(threads),
    )
    return Estimate.from_samples(
        vals, seed, quantity="n_infinity_proxy", radius=ball.radius, p=p, core_radius=core_radius,
        presentation=ball.pres.literal, wall_time_ms=1e3 * (time.perf_counter() - t0),
    )


# ----------------------------------------------------------------------- p_c


def connection_thresholds(pres: Presentation | str, radius: int, trials: int, seed: int, threads=None) -> np.ndarray:
    """Per-trial smallest p with id ↔ sphere(radius), under the shared coupling.

    The empirical CDF of these values is the whole curve p ↦ P_p(id ↔ sphere).
    """
    if isinstance(pres, str):
        pres = parse_presentation(pres)
    trials = _check_trials(trials)
    if radius < 1:
        raise RejectedInputError("radius must be >= 1 so the boundary sphere is nonempty")
    if isinstance(pres, FreeGroup):
        return _tree_bottleneck_kernel(2 * pres.rank, radius, seed_to_u64(seed), trials, _threads(threads))
    from .groups import build_ball

    ball = build_ball(pres, radius)
    if ball.sphere(radius).size == 0:
        raise RejectedInputError("boundary sphere is empty")
    return _ball_bottleneck_kernel(
        ball.indptr, ball.nbr, ball.nbr_edge, ball.edge_keys, ball.norms, radius, seed_to_u64(seed), trials,
        _threads(threads),
    )


def crossing_curve(thresholds: np.ndarray, grid: Iterable[float]) -> list[tuple[float, float, float]]:
    ts = np.sort(thresholds)
    n = ts.shape[0]
    out = []
    for p in grid:
        f = np.searchsorted(ts, p, side="left") / n  # open iff U < p
        out.append((float(p), float(f), math.sqrt(f * (1 - f) / max(n - 1, 1))))
    return out


def _bisect_cdf(ts_sorted: np.ndarray, level: float, tol: float = 1e-7) -> float:
    n = ts_sorted.shape[0]
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.searchsorted(ts_sorted, mid, side="left") / n < level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def pc_estimate(
    pres: Presentation | str,
    radius: int,
    trials: int,
    seed: int,
    threshold: float = 0.5,
    method: str = "crossing",
    grid: Sequence[float] | None = None,
    threads=None,
) -> Estimate:
    """Estimate p_c on a finite ball.

    ``method="crossing"`` bisects on p for the level ``threshold`` of
    P_p(id ↔ sphere(radius)); the whole curve is kept in ``meta["curve"]`` so
    other levels can be read off without re-simulating.

    ``method="growth"`` bisects on the ratio E|C ∩ S_R| / E|C ∩ S_{R-1}| = 1,
    the offspring-mean criterion for a branching structure.
    """
    if isinstance(pres, str):
        pres = parse_presentation(pres)
    trials = _check_trials(trials)
    t0 = time.perf_counter()
    if method == "crossing":
        if not (0.0 < threshold < 1.0):
            raise RejectedInputError("threshold must lie strictly between 0 and 1")
        ts = np.sort(connection_thresholds(pres, radius, trials, seed, threads))
        val = _bisect_cdf(ts, threshold)
        band = math.sqrt(threshold * (1 - threshold) / trials)
        lo = _bisect_cdf(ts, max(threshold - band, 1e-12))
        hi = _bisect_cdf(ts, min(threshold + band, 1 - 1e-12))
        se = 0.5 * (hi - lo)
        if grid is None:
            grid = [round(x, 4) for x in np.linspace(0.0, 1.0, 101)]
        curve = crossing_curve(ts, grid)
        return Estimate(
            val, se, trials, int(seed),
            dict(quantity="pc", method="crossing", threshold=threshold, radius=radius, presentation=pres.literal,
                 curve=curve, wall_time_ms=1e3 * (time.perf_counter() - t0)),
        )
    if method == "growth":
        if radius < 2:
            raise RejectedInputError("growth method needs radius >= 2")
        return _pc_growth(pres, radius, trials, seed, threads, t0)
    raise RejectedInputError(f"unknown p_c method {method!r}")


def _shell_runs(pres, radius, p, trials, seed, threads, ball=None):
    if isinstance(pres, FreeGroup):
        return _tree_runs(TreeBall(pres, radius), p, trials, seed, threads)
    shells, _ = _cluster_runs(ball, p, trials, seed, threads=threads)
    return shells


def _growth_ratio(shells, radius):
    x = shells[:, radius].astype(np.float64)
    y = shells[:, radius - 1].astype(np.float64)
    mx, my = x.mean(), y.mean()
    if my == 0:
        return 0.0, 0.0
    n = x.shape[0]
    cov = np.cov(x, y, ddof=1) if n > 1 else np.zeros((2, 2))
    var = (cov[0, 0] / my**2 - 2 * mx * cov[0, 1] / my**3 + mx**2 * cov[1, 1] / my**4) / n
    return mx / my, math.sqrt(max(var, 0.0))


def _pc_growth(pres, radius, trials, seed, threads, t0):
    ball = None
    if not isinstance(pres, FreeGroup):
        from .groups import build_ball

        ball = build_ball(pres, radius)
    lo, hi = 0.0, 1.0
    history = []
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        r, se = _growth_ratio(_shell_runs(pres, radius, mid, trials, seed, threads, ball), radius)
        history.append((mid, r, se))
        if r < 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6:
            break
    val = 0.5 * (lo + hi)
    h = 0.01
    r_lo, _ = _growth_ratio(_shell_runs(pres, radius, max(val - h, 0.0), trials, seed, threads, ball), radius)
    r_hi, _ = _growth_ratio(_shell_runs(pres, radius, min(val + h, 1.0), trials, seed, threads, ball), radius)
    _, se_at = _growth_ratio(_shell_runs(pres, radius, val, trials, seed, threads, ball), radius)
    slope = (r_hi - r_lo) / (min(val + h, 1.0) - max(val - h, 0.0))
    se = se_at / slope if slope > 0 else math.inf
    return Estimate(
        val, se, trials, int(seed),
        dict(quantity="pc", method="growth", radius=radius, presentation=pres.literal, curve=history,
             wall_time_ms=1e3 * (time.perf_counter() - t0)),
    )


@nb.njit(cache=True, parallel=True)
def _set_count_kernel(indptr, nbr, nbr_edge, ekeys, labels, nsets, p, seed, trials, nchunks):
    nv = indptr.shape[0] - 1
    out = np.zeros((nsets, trials), dtype=np.float64)
    for c in nb.prange(nchunks):
        stamp = np.zeros(nv, dtype=np.int64)
        queue = np.empty(nv, dtype=np.int64)
        epoch = 0
        for t in range(c, trials, nchunks):
            epoch += 1
            n = _bfs(indptr, nbr, nbr_edge, ekeys, stream_key(seed, t), p, 0, stamp, epoch, queue)
            for i in range(n):
                v = queue[i]
                for s in range(nsets):
                    if labels[s, v]:
                        out[s, t] += 1.0
    return out


def set_counts(ball: CayleyBall, p: float, trials: int, seed: int, sets, threads=None) -> np.ndarray:
    """Per-trial #(C(id) ∩ S) for each vertex-index set S; shape (len(sets), trials)."""
    p = _check_p(p)
    trials = _check_trials(trials)
    labels = np.zeros((len(sets), ball.n_vertices), dtype=np.bool_)
    for s, idx in enumerate(sets):
        labels[s, _as_indices(ball, idx)] = True
    return _set_count_kernel(
        ball.indptr, ball.nbr, ball.nbr_edge, ball.edge_keys, labels, len(sets), p, seed_to_u64(seed), trials,
        _threads(threads),
    )
