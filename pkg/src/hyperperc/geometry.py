"""Gromov products, four-point δ, geodesics, projections and halfspaces.

Ball-level functions work on vertex indices of a ``CayleyBall`` and use the
graph metric of the ball (BFS).  The ``tree_*`` helpers work directly on
reduced free-group words, where geodesics are unique and every quantity has an
exact formula; they are the back end for the magic classifier and the barrier
lab, and the ball-level functions serve as their oracle in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numba as nb
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import InternalError, RejectedInputError
from .groups import CayleyBall, FreeGroup, GroupElement, word_distance

# ---------------------------------------------------------------- metrics


@dataclass
class FiniteMetric:
    """Points ``0..n-1`` with either a dense distance matrix or a callback."""

    n: int
    matrix: np.ndarray | None = None
    callback: Callable[[int, int], float] | None = None

    def d(self, i: int, j: int) -> float:
        if self.matrix is not None:
            return self.matrix[i, j]
        return self.callback(i, j)

    def dense(self) -> np.ndarray:
        if self.matrix is None:
            self.matrix = np.array([[self.callback(i, j) for j in range(self.n)] for i in range(self.n)])
        return self.matrix

    @classmethod
    def from_matrix(cls, m) -> "FiniteMetric":
        m = np.asarray(m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise RejectedInputError("distance matrix must be square")
        return cls(m.shape[0], matrix=m)

    @classmethod
    def from_graph(cls, n: int, edges: Iterable[tuple[int, int]]) -> "FiniteMetric":
        e = np.array(list(edges), dtype=np.int64).reshape(-1, 2)
        adj = csr_matrix((np.ones(e.shape[0]), (e[:, 0], e[:, 1])), shape=(n, n))
        d = shortest_path(adj, directed=False, unweighted=True)
        if np.isinf(d).any():
            raise RejectedInputError("graph is disconnected")
        return cls(n, matrix=d.astype(np.int64))

    @classmethod
    def from_ball(cls, ball: CayleyBall) -> "FiniteMetric":
        if isinstance(ball.pres, FreeGroup):
            return cls(ball.n_vertices, matrix=tree_distance_matrix(ball.words))
        return cls.from_graph(ball.n_vertices, ball.edges[:, :2])


def ball_distances_from(ball: CayleyBall, src: int) -> np.ndarray:
    """BFS distances inside the ball from one vertex."""
    return _bfs_dist(ball.indptr, ball.nbr, src)


@nb.njit(cache=True)
def _bfs_dist(indptr, nbr, src):
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    dist[src] = 0
    queue[0] = src
    head, tail = 0, 1
    while head < tail:
        u = queue[head]
        head += 1
        for k in range(indptr[u], indptr[u + 1]):
            v = nbr[k]
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue[tail] = v
                tail += 1
    return dist


def _idx(ball: CayleyBall, x) -> int:
    if isinstance(x, (int, np.integer)):
        if not 0 <= int(x) < ball.n_vertices:
            raise RejectedInputError(f"vertex {x} not in ball")
        return int(x)
    return ball.index(x)


# ---------------------------------------------------------- gromov product


def gromov_product(x, y, z, metric: FiniteMetric | None = None) -> float:
    """(y|z)_x = ½(d(x,y) + d(x,z) − d(y,z))."""
    if metric is None:
        if not all(isinstance(v, GroupElement) for v in (x, y, z)):
            raise RejectedInputError("without a metric, x, y, z must be GroupElements")
        dxy, dxz, dyz = word_distance(x, y), word_distance(x, z), word_distance(y, z)
    else:
        dxy, dxz, dyz = metric.d(x, y), metric.d(x, z), metric.d(y, z)
    return 0.5 * (dxy + dxz - dyz)


# --------------------------------------------------------------------- δ


@nb.njit(cache=True)
def _four_point_exhaustive(d):
    n = d.shape[0]
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dij = d[i, j]
            for k in range(j + 1, n):
                dik = d[i, k]
                djk = d[j, k]
                for m in range(k + 1, n):
                    s1 = dij + d[k, m]
                    s2 = dik + d[j, m]
                    s3 = d[i, m] + djk
                    # largest minus middle
                    if s1 < s2:
                        s1, s2 = s2, s1
                    if s2 < s3:
                        s2, s3 = s3, s2
                    if s1 < s2:
                        s1, s2 = s2, s1
                    v = (s1 - s2) / 4.0
                    if v > best:
                        best = v
    return best


@nb.njit(cache=True)
def _four_point_sampled(d, quads):
    best = 0.0
    for q in range(quads.shape[0]):
        i, j, k, m = quads[q, 0], quads[q, 1], quads[q, 2], quads[q, 3]
        s1 = d[i, j] + d[k, m]
        s2 = d[i, k] + d[j, m]
        s3 = d[i, m] + d[j, k]
        a = max(s1, max(s2, s3))
        c = min(s1, min(s2, s3))
        b = s1 + s2 + s3 - a - c
        v = (a - b) / 4.0
        if v > best:
            best = v
    return best


@nb.njit(cache=True)
def _zero_delta_certificate(d):
    """True iff every quadruple satisfies the four-point condition with δ = 0.

    For each base w, the doubled Gromov products G(x,y) = d(x,w)+d(y,w)−d(x,y)
    satisfy G(x,y) ≥ min(G(x,z), G(z,y)) for all x,y,z exactly when G equals
    its max-min path closure, which is read off a maximum spanning tree.
    """
    n = d.shape[0]
    g = np.empty((n, n), dtype=np.int64)
    in_tree = np.zeros(n, dtype=np.bool_)
    key = np.empty(n, dtype=np.int64)
    par = np.empty(n, dtype=np.int64)
    bott = np.empty(n, dtype=np.int64)
    for w in range(n):
        for x in range(n):
            for y in range(n):
                g[x, y] = d[x, w] + d[y, w] - d[x, y]
        # Prim, maximum spanning tree
        in_tree[:] = False
        key[:] = -1
        par[:] = -1
        key[0] = 1 << 60
        for it in range(n):
            u = -1
            for v in range(n):
                if not in_tree[v] and (u < 0 or key[v] > key[u]):
                    u = v
            in_tree[u] = True
            for v in range(n):
                if not in_tree[v] and g[u, v] > key[v]:
                    key[v] = g[u, v]
                    par[v] = u
        # tree adjacency, then bottleneck from every source compared with g
        deg = np.zeros(n, dtype=np.int64)
        for v in range(n):
            if par[v] >= 0:
                deg[v] += 1
                deg[par[v]] += 1
        ptr = np.zeros(n + 1, dtype=np.int64)
        for v in range(n):
            ptr[v + 1] = ptr[v] + deg[v]
        fill = ptr[:-1].copy()
        adj = np.empty(ptr[n], dtype=np.int64)
        for v in range(n):
            p = par[v]
            if p >= 0:
                adj[fill[v]] = p
                fill[v] += 1
                adj[fill[p]] = v
                fill[p] += 1
        stack = np.empty(n, dtype=np.int64)
        seen = np.empty(n, dtype=np.int64)
        seen[:] = -1
        for s in range(n):
            bott[s] = 1 << 60
            seen[s] = s
            top = 1
            stack[0] = s
            while top > 0:
                top -= 1
                u = stack[top]
                for k in range(ptr[u], ptr[u + 1]):
                    v = adj[k]
                    if seen[v] != s:
                        seen[v] = s
                        b = bott[u] if bott[u] < g[u, v] else g[u, v]
                        bott[v] = b
                        if b > g[s, v]:
                            return False
                        stack[top] = v
                        top += 1
    return True


def estimate_delta(metric: FiniteMetric, sample_size: int | None = None, seed: int = 0,
                   exhaustive_limit: int = 200) -> float:
    """Four-point δ: max over quadruples of (largest − middle pair-sum)/4.

    With ``sample_size=None`` every quadruple is covered: directly for up to
    ``exhaustive_limit`` points, otherwise through the zero-δ certificate when
    it applies, and by direct enumeration as the fallback.
    """
    return delta_details(metric, sample_size, seed, exhaustive_limit)["delta"]


def delta_details(metric: FiniteMetric, sample_size: int | None = None, seed: int = 0,
                  exhaustive_limit: int = 200) -> dict:
    if metric.n < 4:
        raise RejectedInputError("δ needs at least four points")
    d = np.asarray(metric.dense())
    if sample_size is not None:
        rng = np.random.default_rng(seed)
        quads = np.stack([rng.choice(metric.n, 4, replace=False) for _ in range(int(sample_size))])
        return dict(delta=float(_four_point_sampled(d.astype(np.float64), quads)), method="sampled",
                    quadruples=int(sample_size))
    if metric.n <= exhaustive_limit:
        return dict(delta=float(_four_point_exhaustive(d.astype(np.float64))), method="exhaustive")
    if np.issubdtype(d.dtype, np.integer) and _zero_delta_certificate(d.astype(np.int64)):
        return dict(delta=0.0, method="zero-certificate")
    return dict(delta=float(_four_point_exhaustive(d.astype(np.float64))), method="exhaustive")


# --------------------------------------------------------------- geodesics


@dataclass(frozen=True)
class Geodesic:
    vertices: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    @property
    def start(self) -> int:
        return self.vertices[0]

    @property
    def end(self) -> int:
        return self.vertices[-1]


def geodesic(ball: CayleyBall, x, y) -> Geodesic:
    """Shortest path x → y; each step back from y goes to the lowest-index closer neighbour."""
    xi, yi = _idx(ball, x), _idx(ball, y)
    dist = ball_distances_from(ball, xi)
    if dist[yi] < 0:
        raise InternalError("ball is disconnected")
    path = [yi]
    cur = yi
    while cur != xi:
        nb_ = ball.neighbors(cur)
        closer = nb_[dist[nb_] == dist[cur] - 1]
        cur = int(closer.min())
        path.append(cur)
    return Geodesic(tuple(reversed(path)))


def project(ball: CayleyBall, x, gamma: Geodesic) -> set[int]:
    """Vertices of γ nearest to x."""
    dist = ball_distances_from(ball, _idx(ball, x))
    gv = np.array(gamma.vertices, dtype=np.int64)
    dd = dist[gv]
    return set(int(v) for v in gv[dd == dd.min()])


def proj_diameter(ball: CayleyBall, gamma: Geodesic, points) -> float:
    """diam of π_γ(P) in the ball metric."""
    proj: set[int] = set()
    for x in points:
        proj |= project(ball, x, gamma)
    pts = sorted(proj)
    if len(pts) <= 1:
        return 0.0
    best = 0
    for p in pts:
        dist = ball_distances_from(ball, p)
        best = max(best, int(dist[pts].max()))
    return float(best)


# -------------------------------------------------------------- halfspaces


@dataclass(frozen=True)
class HalfspaceSpec:
    """``kind="gromov"``: {z : (z|y)_x ≥ D}.  ``kind="metric"``: {z : d(z,x) < d(z,y)}."""

    kind: str
    x: object
    y: object
    D: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gromov", "metric"):
            raise RejectedInputError(f"unknown halfspace kind {self.kind!r}")


def GromovHalf(x, y, D) -> HalfspaceSpec:
    return HalfspaceSpec("gromov", x, y, float(D))


def MetricHalf(x, y) -> HalfspaceSpec:
    return HalfspaceSpec("metric", x, y)


def word_distances_to(ball: CayleyBall, word: Sequence[int]) -> np.ndarray:
    """Word-metric distance from every vertex of a free-group ball to ``word``.

    ``word`` need not lie in the ball.
    """
    if not isinstance(ball.pres, FreeGroup):
        raise RejectedInputError("word distances to outside points need a free-group ball")
    return ball.norms + len(word) - 2 * word_lcp_rows(ball.word_matrix, word)


def word_lcp_rows(wm: np.ndarray, word: Sequence[int]) -> np.ndarray:
    """Common-prefix length of every row of a zero-padded word matrix with ``word``."""
    w = np.asarray(word, dtype=np.int8).reshape(-1)
    return _lcp_rows(np.ascontiguousarray(wm, dtype=np.int8), w)


@nb.njit(cache=True, parallel=True)
def _lcp_rows(wm, w):
    n, width = wm.shape
    m = min(width, w.shape[0])
    out = np.zeros(n, dtype=np.int64)
    for i in nb.prange(n):
        k = 0
        while k < m and wm[i, k] == w[k] and w[k] != 0:
            k += 1
        out[i] = k
    return out


def _dists(ball: CayleyBall, x) -> tuple[np.ndarray, int | None]:
    if isinstance(x, (int, np.integer)) or ball.contains(x):
        i = _idx(ball, x)
        return ball_distances_from(ball, i), i
    if isinstance(x, GroupElement):
        return word_distances_to(ball, x.word), None
    raise RejectedInputError(f"{x!r} is not in the ball")


def halfspace_members(ball: CayleyBall, spec: HalfspaceSpec) -> np.ndarray:
    """Exact members inside the ball; x and y may lie outside it on free groups."""
    dx, _ = _dists(ball, spec.x)
    dy, _ = _dists(ball, spec.y)
    if spec.kind == "gromov":
        dxy = _pair_distance(ball, spec.x, spec.y)
        prod = 0.5 * (dxy + dx - dy)
        return np.flatnonzero(prod >= spec.D)
    return np.flatnonzero(dx < dy)


def _pair_distance(ball, x, y) -> int:
    if isinstance(x, GroupElement) and isinstance(y, GroupElement):
        return word_distance(x, y)
    dx, _ = _dists(ball, x)
    return int(dx[_idx(ball, y)])


def halfspace_ties(ball: CayleyBall, x, y) -> np.ndarray:
    dx, _ = _dists(ball, x)
    dy, _ = _dists(ball, y)
    return np.flatnonzero(dx == dy)


# -------------------------------------------------- free-group word helpers


def fmul(u: tuple, v: tuple) -> tuple:
    k = 0
    n = min(len(u), len(v))
    while k < n and u[len(u) - 1 - k] == -v[k]:
        k += 1
    return u[: len(u) - k] + v[k:]


def finv(u: tuple) -> tuple:
    return tuple(-x for x in reversed(u))


def lcp(u: Sequence[int], v: Sequence[int]) -> int:
    k = 0
    n = min(len(u), len(v))
    while k < n and u[k] == v[k]:
        k += 1
    return k


def tree_dist(u: tuple, v: tuple) -> int:
    return len(u) + len(v) - 2 * lcp(u, v)


def tree_gromov(x: tuple, y: tuple, z: tuple) -> int:
    """(y|z)_x on the tree; always an integer."""
    return (tree_dist(x, y) + tree_dist(x, z) - tree_dist(y, z)) // 2


def tree_point(g: tuple, h: tuple, t: int) -> tuple:
    """Point at distance t from g on the geodesic [g, h]."""
    w = fmul(finv(g), h)
    if not 0 <= t <= len(w):
        raise RejectedInputError("t outside the geodesic")
    return fmul(g, w[:t])


def tree_geodesic_words(g: tuple, h: tuple) -> list[tuple]:
    w = fmul(finv(g), h)
    return [fmul(g, w[:t]) for t in range(len(w) + 1)]


def tree_projection_position(x: tuple, g: tuple, h: tuple) -> int:
    """Distance from g of π_[g,h](x), namely (h|x)_g."""
    return tree_gromov(g, h, x)


def tree_project(x: tuple, g: tuple, h: tuple) -> tuple:
    return tree_point(g, h, tree_projection_position(x, g, h))


def tree_d_gamma(points: Iterable[tuple], g: tuple, h: tuple) -> int:
    pos = [tree_projection_position(p, g, h) for p in points]
    return max(pos) - min(pos) if pos else 0


def tree_distance_matrix(words: Sequence[Sequence[int]]) -> np.ndarray:
    from .percolation import tree_distance_matrix as _tdm

    return _tdm(words)


# ---------------------------------------------------- randomized lemma checks


def _rand_word(rng: np.random.Generator, max_len: int, rank: int = 2) -> tuple:
    n = int(rng.integers(0, max_len + 1))
    out: list[int] = []
    while len(out) < n:
        s = int(rng.integers(1, rank + 1)) * (1 if rng.random() < 0.5 else -1)
        if out and out[-1] == -s:
            continue
        out.append(s)
    return tuple(out)


def check_fellow_traveller(rng: np.random.Generator, instances: int, max_len: int = 8) -> list[str]:
    """Initial (y|z)_x-long pieces of [x,y] and [x,z] coincide (δ = 0)."""
    bad = []
    for _ in range(instances):
        x, y, z = (_rand_word(rng, max_len) for _ in range(3))
        t = tree_gromov(x, y, z)
        for s in range(t + 1):
            if tree_point(x, y, s) != tree_point(x, z, s):
                bad.append(f"fellow: x={x} y={y} z={z} s={s}")
                break
    return bad


def check_gromov_inequality(rng: np.random.Generator, instances: int, max_len: int = 8) -> list[str]:
    bad = []
    for _ in range(instances):
        x, y, z, w = (_rand_word(rng, max_len) for _ in range(4))
        if tree_gromov(w, x, y) < min(tree_gromov(w, x, z), tree_gromov(w, z, y)):
            bad.append(f"gromov-ineq: {x} {y} {z} {w}")
    return bad


def check_stability(rng: np.random.Generator, instances: int, n_points: int = 5, step: int = 6) -> list[str]:
    """Chains with small turning products: d(x0,xn) ≥ Σ d − 2 Σ turning products.

    At δ = 0 the admissibility condition is taken strictly: with equality a
    turn can swallow a whole segment and the bound fails on trees.
    """
    bad = []
    done = 0
    tries = 0
    while done < instances and tries < 200 * instances:
        tries += 1
        xs = [()]
        for _ in range(n_points):
            xs.append(fmul(xs[-1], _rand_word(rng, step)))
        ok = all(
            tree_gromov(xs[i], xs[i - 1], xs[i + 1]) + tree_gromov(xs[i + 1], xs[i], xs[i + 2])
            < tree_dist(xs[i], xs[i + 1])
            for i in range(1, len(xs) - 2)
        )
        if not ok:
            continue
        done += 1
        turn = sum(tree_gromov(xs[i], xs[i - 1], xs[i + 1]) for i in range(1, len(xs) - 1))
        total = sum(tree_dist(xs[i - 1], xs[i]) for i in range(1, len(xs)))
        if tree_dist(xs[0], xs[-1]) < total - 2 * turn:
            bad.append(f"stability: {xs}")
    if done < instances:
        bad.append(f"stability: only {done} admissible chains found")
    return bad


def check_projection_corollary(rng: np.random.Generator, instances: int, max_len: int = 8) -> dict[str, list[str]]:
    """Items (1), (2), (3), (5) of the projection corollary with zero slack."""
    fails: dict[str, list[str]] = {"lipschitz": [], "constriction": [], "no_backtracking": [], "subgeodesic": []}
    for _ in range(instances):
        g, h, x, y = (_rand_word(rng, max_len) for _ in range(4))
        glen = tree_dist(g, h)
        px, py = tree_projection_position(x, g, h), tree_projection_position(y, g, h)
        # (1) singleton projection, 1-Lipschitz
        gwords = tree_geodesic_words(g, h)
        dists = [tree_dist(x, w) for w in gwords]
        nearest = [i for i, dv in enumerate(dists) if dv == min(dists)]
        if nearest != [px] or abs(px - py) > tree_dist(x, y):
            fails["lipschitz"].append(f"g={g} h={h} x={x} y={y}")
        # (2) [p,q] lies on [x,y] once p != q
        if px != py:
            xy = set(tree_geodesic_words(x, y))
            seg = gwords[min(px, py) : max(px, py) + 1]
            if not all(w in xy for w in seg):
                fails["constriction"].append(f"g={g} h={h} x={x} y={y}")
        # (3) z on [x,y] projects between the projections of x and y
        for z in tree_geodesic_words(x, y):
            pz = tree_projection_position(z, g, h)
            if not min(px, py) <= pz <= max(px, py):
                fails["no_backtracking"].append(f"g={g} h={h} x={x} y={y} z={z}")
                break
        # (5) sub-geodesic comparison
        if glen >= 1:
            a = int(rng.integers(0, glen + 1))
            b = int(rng.integers(a, glen + 1))
            g2, h2 = gwords[a], gwords[b]
            sub = tree_d_gamma([x, y], g2, h2)
            full = tree_d_gamma([x, y], g, h)
            if sub > 0 and full < sub:
                fails["subgeodesic"].append(f"g={g} h={h} sub=({a},{b}) x={x} y={y}")
    return fails


def check_projection_lemma(rng: np.random.Generator, instances: int, max_len: int = 8) -> list[str]:
    """π_[x,y](z) is the point at distance (y|z)_x from x."""
    bad = []
    for _ in range(instances):
        x, y, z = (_rand_word(rng, max_len) for _ in range(3))
        words = tree_geodesic_words(x, y)
        dists = [tree_dist(z, w) for w in words]
        i = int(np.argmin(dists))
        if words[i] != tree_point(x, y, tree_gromov(x, y, z)) or dists.count(min(dists)) != 1:
            bad.append(f"projection: x={x} y={y} z={z}")
    return bad
