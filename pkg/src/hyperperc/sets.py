"""Set expressions for finite subsets of a group.

Grammar::

    expr  := sphere(N) | ball(N) | geodesic(WORD, N [, STEP]) | words(WORD, ...)
           | union(expr, ...) | file:PATH
    WORD  := letters as accepted by the presentation (``aab``, ``a^3 B``, ``id``)

``geodesic(w, n, s)`` is {w^{s·i} : 0 ≤ i ≤ n}; ``file:`` reads one word per
line (blank lines and ``#`` comments skipped).  Results are reduced words in
canonical order without duplicates.
"""

from __future__ import annotations

import re
from pathlib import Path

from .errors import RejectedInputError
from .groups import Presentation, build_ball, letter_code, parse_presentation

_CALL = re.compile(r"\s*([a-z_]+)\s*\(")


def _split_args(text: str) -> list[str]:
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "," and depth == 0:
            out.append("".join(cur).strip())
            cur = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        if depth < 0:
            raise RejectedInputError("unbalanced parentheses in set expression")
        cur.append(ch)
    if depth:
        raise RejectedInputError("unbalanced parentheses in set expression")
    tail = "".join(cur).strip()
    if tail or out:
        out.append(tail)
    return out


def _int(text: str, what: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise RejectedInputError(f"{what} must be an integer, got {text!r}") from None
    if v < 0:
        raise RejectedInputError(f"{what} must be non-negative")
    return v


def _word(pres: Presentation, text: str):
    if text.strip() in ("id", "e", "1", ""):
        return pres.identity_word()
    return pres.parse(text).word


def _power(pres: Presentation, w, n: int):
    out = pres.identity_word()
    for _ in range(n):
        out = pres.mul_words(out, w)
    return out


def _read_file(pres: Presentation, path: str) -> list:
    p = Path(path)
    if not p.is_file():
        raise RejectedInputError(f"set file not found: {path}")
    out = []
    for n, line in enumerate(p.read_text().splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        try:
            out.append(_word(pres, s))
        except RejectedInputError as exc:
            raise RejectedInputError(f"{path}:{n}: {exc}") from None
    return out


def _eval(pres: Presentation, text: str, base_dir: Path | None) -> list:
    text = text.strip()
    if text.startswith("file:"):
        path = text[5:].strip()
        if base_dir is not None and not Path(path).is_absolute():
            path = str(base_dir / path)
        return _read_file(pres, path)
    m = _CALL.match(text)
    if not m or not text.endswith(")"):
        raise RejectedInputError(f"cannot parse set expression {text!r}")
    name = m.group(1)
    args = _split_args(text[m.end() : -1])
    if name in ("sphere", "ball"):
        if len(args) != 1:
            raise RejectedInputError(f"{name}() takes one radius")
        r = _int(args[0], "radius")
        b = build_ball(pres, r)
        idx = b.sphere(r) if name == "sphere" else range(b.n_vertices)
        return [b.words[int(i)] for i in idx]
    if name == "geodesic":
        if len(args) not in (2, 3):
            raise RejectedInputError("geodesic(word, n[, step]) takes two or three arguments")
        w = _word(pres, args[0])
        n = _int(args[1], "n")
        step = _int(args[2], "step") if len(args) == 3 else 1
        ws = _power(pres, w, step)
        out, cur = [], pres.identity_word()
        for _ in range(n + 1):
            out.append(cur)
            cur = pres.mul_words(cur, ws)
        return out
    if name == "words":
        return [_word(pres, a) for a in args]
    if name == "union":
        if not args:
            raise RejectedInputError("union() needs at least one argument")
        out = []
        for a in args:
            out.extend(_eval(pres, a, base_dir))
        return out
    raise RejectedInputError(f"unknown set constructor {name!r}")


def parse_set(expr: str, pres: Presentation | str = "free:2", base_dir: str | Path | None = None) -> list:
    """Evaluate a set expression to a sorted, duplicate-free list of reduced words."""
    if isinstance(pres, str):
        pres = parse_presentation(pres)
    words = _eval(pres, expr, Path(base_dir) if base_dir is not None else None)
    uniq = set(words)
    return sorted(uniq, key=lambda w: (pres.norm_word(w), tuple(letter_code(x) for x in pres.spell(w))))


def format_set(words, pres: Presentation | str = "free:2") -> list[str]:
    if isinstance(pres, str):
        pres = parse_presentation(pres)
    return [pres.format_word(w) for w in words]
