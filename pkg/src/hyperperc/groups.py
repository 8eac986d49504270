"""Word arithmetic and truncated Cayley graphs.

Letters are signed integers: ``+(i+1)`` is generator ``i`` and ``-(i+1)`` its
formal inverse.  Every letter also has a positive *code*
(``a=1, a^-1=2, b=3, b^-1=4, ...``) which fixes the canonical lexicographic
order and feeds the RNG keys.

Supported presentations: free groups, free products of two finite cyclic
groups, integer lattices and direct products of those.  Elements are stored in
normal form (reduced tuples of letters, or coordinate vectors for lattices).
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import RejectedInputError, ResourceError
from .rng import ROOT_KEY, child_keys

DEFAULT_MAX_VERTICES = 4_000_000
_FREE_NAMES = "abcdefghijklmnopqrstuvw"


def max_vertices() -> int:
    raw = os.environ.get("HYPERPERC_MAX_VERTICES")
    if raw is None or raw.strip() == "":
        return DEFAULT_MAX_VERTICES
    try:
        cap = int(raw)
    except ValueError as exc:
        raise RejectedInputError(f"HYPERPERC_MAX_VERTICES must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise RejectedInputError("HYPERPERC_MAX_VERTICES must be positive")
    return cap


def letter_code(letter: int) -> int:
    return 2 * (abs(letter) - 1) + (2 if letter < 0 else 1)


def code_letter(code: int) -> int:
    g = (code - 1) // 2 + 1
    return -g if code % 2 == 0 else g


# ---------------------------------------------------------------- presentations


class Presentation:
    """Abstract group presentation with a symmetric generating set."""

    ngens: int
    depth: int = 0

    # subclasses implement these on raw normal-form data
    def identity_word(self):
        raise NotImplementedError

    def reduce_letters(self, letters: Sequence[int]):
        raise NotImplementedError

    def mul_words(self, u, v):
        raise NotImplementedError

    def inv_word(self, u):
        raise NotImplementedError

    def norm_word(self, u) -> int:
        raise NotImplementedError

    def spell(self, u) -> tuple[int, ...]:
        """A geodesic spelling of ``u`` as a tuple of letters (canonical)."""
        raise NotImplementedError

    def sphere_sizes(self, radius: int) -> list[int]:
        raise NotImplementedError

    def format_word(self, u) -> str:
        raise NotImplementedError

    def parse_word_data(self, text: str):
        raise NotImplementedError

    @property
    def literal(self) -> str:
        raise NotImplementedError

    # shared behaviour
    @cached_property
    def letters(self) -> tuple[int, ...]:
        """Generating set S ∪ S⁻¹ as letters, one per distinct group element."""
        seen = {}
        ident = self.identity_word()
        for g in range(1, self.ngens + 1):
            for s in (g, -g):
                w = self.reduce_letters((s,))
                if w == ident or w in seen:
                    continue
                seen[w] = s
        return tuple(sorted(seen.values(), key=letter_code))

    def is_tree(self) -> bool:
        return False

    def identity(self) -> "GroupElement":
        return GroupElement(self, self.identity_word())

    def element(self, letters: Sequence[int]) -> "GroupElement":
        return reduce(letters, self)

    def parse(self, text: str) -> "GroupElement":
        return GroupElement(self, self.parse_word_data(text))

    def ball_size(self, radius: int) -> int:
        return int(sum(self.sphere_sizes(radius)))

    def __eq__(self, other):
        return isinstance(other, Presentation) and self.literal == other.literal

    def __hash__(self):
        return hash(self.literal)

    def __repr__(self):
        return f"Presentation({self.literal})"


def _check_letters(letters: Iterable[int], ngens: int) -> list[int]:
    out = []
    for x in letters:
        if isinstance(x, (bool, np.bool_)) or not isinstance(x, (int, np.integer)):
            raise RejectedInputError(f"letter {x!r} is not a signed generator index")
        x = int(x)
        if x == 0 or abs(x) > ngens:
            raise RejectedInputError(f"letter {x} does not index a generator (have {ngens})")
        out.append(x)
    return out


class FreeGroup(Presentation):
    def __init__(self, rank: int):
        if rank < 1:
            raise RejectedInputError("free group rank must be >= 1")
        if rank > len(_FREE_NAMES):
            raise RejectedInputError(f"free group rank must be <= {len(_FREE_NAMES)}")
        self.rank = rank
        self.ngens = rank

    @property
    def literal(self):
        return f"free:{self.rank}"

    def is_tree(self):
        return True

    def identity_word(self):
        return ()

    def reduce_letters(self, letters):
        stack: list[int] = []
        for x in _check_letters(letters, self.ngens):
            if stack and stack[-1] == -x:
                stack.pop()
            else:
                stack.append(x)
        return tuple(stack)

    def mul_words(self, u, v):
        k = 0
        n = min(len(u), len(v))
        while k < n and u[len(u) - 1 - k] == -v[k]:
            k += 1
        return u[: len(u) - k] + v[k:]

    def inv_word(self, u):
        return tuple(-x for x in reversed(u))

    def norm_word(self, u):
        return len(u)

    def spell(self, u):
        return u

    def sphere_sizes(self, radius):
        k = self.rank
        out = [1]
        for n in range(1, radius + 1):
            out.append(2 * k * (2 * k - 1) ** (n - 1))
        return out

    def format_word(self, u):
        return format_free_word(u)

    def parse_word_data(self, text):
        return self.reduce_letters(parse_free_letters(text, self.ngens))


class FreeProduct(Presentation):
    """Z_m * Z_n with generators x (order m) and y (order n)."""

    def __init__(self, m: int, n: int):
        if m < 1 or n < 1:
            raise RejectedInputError("free product orders must be >= 1")
        self.orders = (m, n)
        self.ngens = 2

    @property
    def literal(self):
        return f"freeprod:{self.orders[0]},{self.orders[1]}"

    def identity_word(self):
        return ()

    def _syllables(self, letters):
        # stack of [factor, exponent mod order]
        stack: list[list[int]] = []
        for x in letters:
            f = abs(x) - 1
            e = 1 if x > 0 else -1
            order = self.orders[f]
            if stack and stack[-1][0] == f:
                stack[-1][1] = (stack[-1][1] + e) % order
                if stack[-1][1] == 0:
                    stack.pop()
            else:
                e %= order
                if e:
                    stack.append([f, e])
        return stack

    def _expand(self, syllables):
        out: list[int] = []
        for f, e in syllables:
            order = self.orders[f]
            if 2 * e <= order:
                out.extend([f + 1] * e)
            else:
                out.extend([-(f + 1)] * (order - e))
        return tuple(out)

    def reduce_letters(self, letters):
        return self._expand(self._syllables(_check_letters(letters, 2)))

    def mul_words(self, u, v):
        return self._expand(self._syllables(list(u) + list(v)))

    def inv_word(self, u):
        return self.reduce_letters([-x for x in reversed(u)])

    def norm_word(self, u):
        return len(u)

    def spell(self, u):
        return u

    def sphere_sizes(self, radius):
        def syllable_counts(order):
            c = [0] * (radius + 1)
            for e in range(1, order):
                ell = min(e, order - e)
                if ell <= radius:
                    c[ell] += 1
            return c

        cx, cy = syllable_counts(self.orders[0]), syllable_counts(self.orders[1])
        fx = [0] * (radius + 1)
        fy = [0] * (radius + 1)
        for n in range(1, radius + 1):
            fx[n] = sum(cx[ell] * (fy[n - ell] + (n == ell)) for ell in range(1, n + 1))
            fy[n] = sum(cy[ell] * (fx[n - ell] + (n == ell)) for ell in range(1, n + 1))
        return [1] + [fx[n] + fy[n] for n in range(1, radius + 1)]

    def format_word(self, u):
        if not u:
            return "id"
        return "".join("x" if s == 1 else "X" if s == -1 else "y" if s == 2 else "Y" for s in u)

    def parse_word_data(self, text):
        letters = []
        for tok in _tokenize_letters(text):
            name, power = tok
            lower = name.lower()
            if lower not in ("x", "y"):
                raise RejectedInputError(f"unknown generator {name!r} for {self.literal}")
            g = 1 if lower == "x" else 2
            sign = -1 if name.isupper() else 1
            s = sign * g if power >= 0 else -sign * g
            letters.extend([s] * abs(power))
        return self.reduce_letters(letters)


class IntegerLattice(Presentation):
    def __init__(self, dim: int):
        if dim < 1:
            raise RejectedInputError("lattice dimension must be >= 1")
        self.dim = dim
        self.ngens = dim

    @property
    def literal(self):
        return f"lattice:{self.dim}"

    def identity_word(self):
        return (0,) * self.dim

    def reduce_letters(self, letters):
        c = [0] * self.dim
        for x in _check_letters(letters, self.ngens):
            c[abs(x) - 1] += 1 if x > 0 else -1
        return tuple(c)

    def mul_words(self, u, v):
        return tuple(a + b for a, b in zip(u, v))

    def inv_word(self, u):
        return tuple(-a for a in u)

    def norm_word(self, u):
        return sum(abs(a) for a in u)

    def spell(self, u):
        out: list[int] = []
        for i, a in enumerate(u):
            out.extend([(i + 1) if a > 0 else -(i + 1)] * abs(a))
        return tuple(out)

    def sphere_sizes(self, radius):
        d = self.dim
        out = [1]
        for n in range(1, radius + 1):
            out.append(sum(2**k * math.comb(d, k) * math.comb(n - 1, k - 1) for k in range(1, min(d, n) + 1)))
        return out

    def format_word(self, u):
        return "(" + ",".join(str(a) for a in u) + ")"

    def parse_word_data(self, text):
        t = text.strip()
        if t in ("id", "e", ""):
            return self.identity_word()
        m = re.fullmatch(r"\(\s*(-?\d+(?:\s*,\s*-?\d+)*)\s*,?\s*\)", t)
        if not m:
            raise RejectedInputError(f"cannot parse lattice point {text!r}")
        vals = tuple(int(v) for v in m.group(1).split(","))
        if len(vals) != self.dim:
            raise RejectedInputError(f"{text!r} has {len(vals)} coordinates, expected {self.dim}")
        return vals


class DirectProduct(Presentation):
    """Component words are kept separately; the norm is additive."""

    def __init__(self, left: Presentation, right: Presentation):
        depth = 1 + max(left.depth, right.depth)
        if depth > 2:
            raise RejectedInputError("direct products may be nested at most two deep")
        self.left, self.right = left, right
        self.depth = depth
        self.ngens = left.ngens + right.ngens

    @property
    def literal(self):
        return f"product({self.left.literal},{self.right.literal})"

    def identity_word(self):
        return (self.left.identity_word(), self.right.identity_word())

    def _split(self, letters):
        lft, rgt = [], []
        for x in _check_letters(letters, self.ngens):
            if abs(x) <= self.left.ngens:
                lft.append(x)
            else:
                rgt.append(x - self.left.ngens if x > 0 else x + self.left.ngens)
        return lft, rgt

    def reduce_letters(self, letters):
        lft, rgt = self._split(letters)
        return (self.left.reduce_letters(lft), self.right.reduce_letters(rgt))

    def mul_words(self, u, v):
        return (self.left.mul_words(u[0], v[0]), self.right.mul_words(u[1], v[1]))

    def inv_word(self, u):
        return (self.left.inv_word(u[0]), self.right.inv_word(u[1]))

    def norm_word(self, u):
        return self.left.norm_word(u[0]) + self.right.norm_word(u[1])

    def spell(self, u):
        shift = self.left.ngens
        rgt = tuple(x + shift if x > 0 else x - shift for x in self.right.spell(u[1]))
        return self.left.spell(u[0]) + rgt

    def sphere_sizes(self, radius):
        a = self.left.sphere_sizes(radius)
        b = self.right.sphere_sizes(radius)
        return [sum(a[i] * b[n - i] for i in range(n + 1)) for n in range(radius + 1)]

    def format_word(self, u):
        return f"{self.left.format_word(u[0])}|{self.right.format_word(u[1])}"

    def parse_word_data(self, text):
        if text.strip() in ("id", "e"):
            return self.identity_word()
        parts = text.split("|")
        if len(parts) != 2:
            raise RejectedInputError(f"product element {text!r} must look like 'left|right'")
        return (self.left.parse_word_data(parts[0]), self.right.parse_word_data(parts[1]))


def parse_presentation(literal: str) -> Presentation:
    """Parse ``free:2``, ``lattice:2``, ``freeprod:2,3`` or ``product(P,Q)``."""
    s = literal.strip().replace(" ", "")
    m = re.fullmatch(r"product\((.*)\)", s)
    if m:
        inner = m.group(1)
        depth = 0
        for i, ch in enumerate(inner):
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            elif ch == "," and depth == 0 and not re.fullmatch(r".*freeprod:\d+", inner[:i]):
                return DirectProduct(parse_presentation(inner[:i]), parse_presentation(inner[i + 1 :]))
        raise RejectedInputError(f"cannot split product literal {literal!r}")
    m = re.fullmatch(r"free:(\d+)", s)
    if m:
        return FreeGroup(int(m.group(1)))
    m = re.fullmatch(r"lattice:(\d+)", s)
    if m:
        return IntegerLattice(int(m.group(1)))
    m = re.fullmatch(r"freeprod:(\d+),(\d+)", s)
    if m:
        return FreeProduct(int(m.group(1)), int(m.group(2)))
    raise RejectedInputError(f"unknown presentation literal {literal!r}")


# ----------------------------------------------------------------- word text

_SUPERSCRIPT = str.maketrans("⁰¹²³⁴⁵⁶⁷⁸⁹⁻", "0123456789-")
_TOKEN = re.compile(r"([A-Za-z])(?:\^\{?(-?\d+)\}?|(-?\d+))?")


def _tokenize_letters(text: str) -> list[tuple[str, int]]:
    t = text.strip()
    if t in ("", "id", "1"):
        return []
    t = t.translate(_SUPERSCRIPT)
    t = re.sub(r"([A-Za-z])(-?\d+)", r"\1^\2", t)  # b-1 / b⁻¹ style
    t = t.replace(" ", "").replace("·", "").replace("*", "")
    out = []
    pos = 0
    while pos < len(t):
        m = _TOKEN.match(t, pos)
        if not m:
            raise RejectedInputError(f"cannot parse word {text!r} at position {pos}")
        power = int(m.group(2) or m.group(3) or 1)
        out.append((m.group(1), power))
        pos = m.end()
    return out


def parse_free_letters(text: str, ngens: int) -> list[int]:
    letters: list[int] = []
    for name, power in _tokenize_letters(text):
        idx = _FREE_NAMES.find(name.lower())
        if idx < 0 or idx >= ngens:
            raise RejectedInputError(f"unknown generator {name!r} (have {ngens})")
        s = idx + 1
        if name.isupper():
            s = -s
        if power < 0:
            s = -s
        letters.extend([s] * abs(power))
    return letters


def format_free_word(u: Sequence[int]) -> str:
    if len(u) == 0:
        return "id"
    return "".join(_FREE_NAMES[abs(x) - 1] if x > 0 else _FREE_NAMES[abs(x) - 1].upper() for x in u)


# ------------------------------------------------------------------ elements


@dataclass(frozen=True)
class GroupElement:
    pres: Presentation
    word: tuple

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        _same(self, other)
        return GroupElement(self.pres, self.pres.mul_words(self.word, other.word))

    def inverse(self) -> "GroupElement":
        return GroupElement(self.pres, self.pres.inv_word(self.word))

    @property
    def norm(self) -> int:
        return self.pres.norm_word(self.word)

    def letters(self) -> tuple[int, ...]:
        return self.pres.spell(self.word)

    def sort_key(self):
        return (self.norm, tuple(letter_code(x) for x in self.letters()))

    def __str__(self):
        return self.pres.format_word(self.word)

    def __repr__(self):
        return f"<{self.pres.literal} {self}>"


def _same(g: GroupElement, h: GroupElement) -> None:
    if g.pres != h.pres:
        raise RejectedInputError(f"elements of different presentations: {g.pres.literal} vs {h.pres.literal}")


def reduce(word, pres: Presentation) -> GroupElement:
    """Normal form of a raw letter sequence (or word text)."""
    if isinstance(word, str):
        return pres.parse(word)
    return GroupElement(pres, pres.reduce_letters(list(word)))


def word_distance(g: GroupElement, h: GroupElement) -> int:
    _same(g, h)
    return g.pres.norm_word(g.pres.mul_words(g.pres.inv_word(g.word), h.word))


# ---------------------------------------------------------------- Cayley balls


@dataclass
class CayleyBall:
    """Induced subgraph of the Cayley graph on all elements of norm <= radius.

    Vertices are sorted by (norm, lexicographic letter codes); vertex 0 is the
    identity.  ``edges`` rows are ``(u, v, gen)`` with ``u < v`` and
    ``vertex[u] * letters[gen] == vertex[v]``.
    """

    pres: Presentation
    radius: int
    norms: np.ndarray
    edges: np.ndarray
    vertex_keys: np.ndarray
    edge_keys: np.ndarray
    indptr: np.ndarray
    nbr: np.ndarray
    nbr_edge: np.ndarray
    _words: list | None = None
    word_matrix: np.ndarray | None = None  # free groups: (n, radius) int8, zero padded
    _index: dict | None = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return int(self.norms.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def words(self) -> list:
        if self._words is None:
            wm = self.word_matrix
            self._words = [tuple(int(x) for x in wm[i, : self.norms[i]]) for i in range(self.n_vertices)]
        return self._words

    @property
    def vertices(self) -> list[GroupElement]:
        return [GroupElement(self.pres, w) for w in self.words]

    def element(self, i: int) -> GroupElement:
        return GroupElement(self.pres, self.words[i])

    def index(self, g) -> int:
        if self._index is None:
            self._index = {w: i for i, w in enumerate(self.words)}
        w = g.word if isinstance(g, GroupElement) else g
        if isinstance(g, GroupElement) and g.pres != self.pres:
            raise RejectedInputError("element belongs to a different presentation")
        try:
            return self._index[w]
        except KeyError:
            raise RejectedInputError(f"{self.pres.format_word(w)} is not in the radius-{self.radius} ball") from None

    def contains(self, g) -> bool:
        try:
            self.index(g)
        except RejectedInputError:
            return False
        return True

    def indices(self, elements: Iterable) -> np.ndarray:
        return np.array(sorted({self.index(g) for g in elements}), dtype=np.int64)

    def sphere(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.norms == n)

    def neighbors(self, i: int) -> np.ndarray:
        return self.nbr[self.indptr[i] : self.indptr[i + 1]]

    def export_text(self) -> str:
        lines = [f"vertices {self.n_vertices} radius {self.radius}"]
        lines.extend(f"{u} {v} {g}" for u, v, g in self.edges.tolist())
        return "\n".join(lines) + "\n"


def _csr(n: int, edges: np.ndarray):
    if edges.shape[0] == 0:
        return np.zeros(n + 1, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    eid = np.concatenate([np.arange(edges.shape[0]), np.arange(edges.shape[0])])
    order = np.lexsort((dst, src))
    counts = np.bincount(src, minlength=n)
    indptr = np.zeros(n + 1, np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, dst[order].astype(np.int64), eid[order].astype(np.int64)


def _check_cap(pres: Presentation, radius: int) -> int:
    if radius < 0:
        raise RejectedInputError("radius must be non-negative")
    predicted = pres.ball_size(radius)
    cap = max_vertices()
    if predicted > cap:
        raise ResourceError(
            f"ball of radius {radius} in {pres.literal} has {predicted} vertices, above the cap of {cap} "
            "(set HYPERPERC_MAX_VERTICES to raise it)"
        )
    return predicted


def build_ball(pres: Presentation | str, radius: int) -> CayleyBall:
    """BFS-complete ball of the given radius with deterministic ordering."""
    if isinstance(pres, str):
        pres = parse_presentation(pres)
    _check_cap(pres, radius)
    if isinstance(pres, FreeGroup):
        return _build_free_ball(pres, radius)
    return _build_generic_ball(pres, radius)


def _build_free_ball(pres: FreeGroup, radius: int) -> CayleyBall:
    letters = np.array(pres.letters, dtype=np.int8)  # sorted by code: a, A, b, B, ...
    codes = np.array([letter_code(int(x)) for x in letters], dtype=np.uint64)
    width = max(radius, 1)
    levels_words = [np.zeros((1, width), np.int8)]
    levels_last = [np.zeros(1, np.int8)]
    levels_keys = [np.array([ROOT_KEY], dtype=np.uint64)]
    parents, gens = [np.zeros(0, np.int64)], [np.zeros(0, np.int64)]
    offset = 1
    prev_offset = 0
    for n in range(1, radius + 1):
        w, last, keys = levels_words[-1], levels_last[-1], levels_keys[-1]
        # each parent spawns children for every letter except the inverse of its last
        allowed = letters[None, :] != -last[:, None]
        pidx, gidx = np.nonzero(allowed)
        new = w[pidx].copy()
        new[:, n - 1] = letters[gidx]
        levels_words.append(new)
        levels_last.append(letters[gidx])
        levels_keys.append(child_keys(keys[pidx], codes[gidx]))
        parents.append(prev_offset + pidx.astype(np.int64))
        gens.append(gidx.astype(np.int64))
        prev_offset = offset
        offset += new.shape[0]
    words = np.concatenate(levels_words)[:, :radius] if radius > 0 else np.zeros((1, 0), np.int8)
    norms = np.concatenate([np.full(x.shape[0], i, np.int64) for i, x in enumerate(levels_words)])
    vkeys = np.concatenate(levels_keys)
    par = np.concatenate(parents)
    gen = np.concatenate(gens)
    child = np.arange(1, norms.shape[0], dtype=np.int64)
    edges = np.stack([par, child, gen], axis=1) if child.size else np.zeros((0, 3), np.int64)
    ekeys = vkeys[1:].copy()  # edge key = key of the child endpoint
    indptr, nbr, nbr_edge = _csr(norms.shape[0], edges)
    return CayleyBall(pres, radius, norms, edges, vkeys, ekeys, indptr, nbr, nbr_edge, word_matrix=words)


def _build_generic_ball(pres: Presentation, radius: int) -> CayleyBall:
    letters = pres.letters
    ident = pres.identity_word()
    level = [ident]
    seen = {ident: 0}
    norms_by_word = {ident: 0}
    ordered = [ident]
    for n in range(1, radius + 1):
        nxt = set()
        for u in level:
            for s in letters:
                v = pres.mul_words(u, pres.reduce_letters((s,)))
                if v not in norms_by_word:
                    norms_by_word[v] = n
                    nxt.add(v)
        level = sorted(nxt, key=lambda w: tuple(letter_code(x) for x in pres.spell(w)))
        ordered.extend(level)
    for i, w in enumerate(ordered):
        seen[w] = i
    vkeys = np.empty(len(ordered), dtype=np.uint64)
    from .rng import key_of_letters

    for i, w in enumerate(ordered):
        vkeys[i] = key_of_letters([letter_code(x) for x in pres.spell(w)])
    edge_rows = []
    edge_keys = []
    pairs = set()
    from .rng import child_key

    for i, u in enumerate(ordered):
        for gi, s in enumerate(letters):
            v = pres.mul_words(u, pres.reduce_letters((s,)))
            j = seen.get(v)
            if j is None or j == i:
                continue
            a, b = (i, j) if i < j else (j, i)
            if (a, b) in pairs:
                continue
            pairs.add((a, b))
            if i == a:
                edge_rows.append((a, b, gi))
                edge_keys.append(np.uint64(child_key(vkeys[a], np.uint64(letter_code(s)))))
            else:
                inv = -s
                gj = letters.index(inv) if inv in letters else gi
                edge_rows.append((a, b, gj))
                edge_keys.append(np.uint64(child_key(vkeys[a], np.uint64(letter_code(letters[gj])))))
    edges = np.array(edge_rows, dtype=np.int64).reshape(-1, 3)
    norms = np.array([norms_by_word[w] for w in ordered], dtype=np.int64)
    indptr, nbr, nbr_edge = _csr(len(ordered), edges)
    ball = CayleyBall(
        pres, radius, norms, edges, vkeys, np.array(edge_keys, dtype=np.uint64), indptr, nbr, nbr_edge, _words=ordered
    )
    ball._index = dict(seen)
    return ball


@dataclass(frozen=True)
class TreeBall:
    """Implicit ball in the Cayley tree of a free group.

    Nothing is materialised; percolation kernels walk the tree lazily using the
    same vertex and edge keys an explicit ``CayleyBall`` would carry.  Use this
    for radii far beyond what fits in memory.
    """

    pres: FreeGroup
    radius: int

    def __post_init__(self):
        if not isinstance(self.pres, FreeGroup):
            raise RejectedInputError("TreeBall requires a free-group presentation")
        if self.radius < 0:
            raise RejectedInputError("radius must be non-negative")

    @property
    def n_vertices(self) -> int:
        return self.pres.ball_size(self.radius)

    def contains(self, g) -> bool:
        w = g.word if isinstance(g, GroupElement) else g
        return len(w) <= self.radius


def tree_ball(pres: FreeGroup | str, radius: int) -> TreeBall:
    if isinstance(pres, str):
        pres = parse_presentation(pres)
    return TreeBall(pres, radius)


def free_element_key(word: Sequence[int]) -> np.uint64:
    from .rng import key_of_letters

    return key_of_letters([letter_code(x) for x in word])
