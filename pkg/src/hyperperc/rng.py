"""Counter-based random numbers keyed by vertices and edges.

Every edge carries a 64-bit key derived from the word of its lower endpoint
and the generator label.  The uniform variate of that edge in trial ``t`` is a
pure function of ``(seed, t, edge key)``:

    stream  = splitmix64(seed XOR t)
    U(edge) = top53(splitmix64(stream XOR edge_key)) / 2**53

so results do not depend on the order in which edges are visited, on the
number of worker threads, or on whether the graph is stored explicitly.
The mixing function is SplitMix64 (Steele, Lea and Flood 2014) with its
published constants.  An edge is open at parameter ``p`` iff ``U < p``, which
gives the monotone coupling ``omega_p <= omega_q`` for ``p <= q``.
"""

from __future__ import annotations

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
LETTER_MULT = np.uint64(0xD1B54A32D192ED03)
ROOT_KEY = np.uint64(0x243F6A8885A308D3)
LANE_MULT = np.uint64(0xA0761D6478BD642F)
_INV_2_53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


@nb.njit(cache=True, inline="always")
def splitmix64(x):
    z = x + GOLDEN
    z = (z ^ (z >> np.uint64(30))) * MIX1
    z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, inline="always")
def child_key(parent_key, letter_code):
    """Key of the vertex (or edge) reached from ``parent_key`` along a letter."""
    return splitmix64(parent_key ^ (np.uint64(letter_code) * LETTER_MULT))


@nb.njit(cache=True, inline="always")
def stream_key(seed, trial):
    return splitmix64(np.uint64(seed) ^ np.uint64(trial))


@nb.njit(cache=True, inline="always")
def lane_key(stream, lane):
    return splitmix64(stream + np.uint64(lane) * LANE_MULT)


@nb.njit(cache=True, inline="always")
def uniform(stream, key):
    return np.float64(splitmix64(stream ^ key) >> np.uint64(11)) * _INV_2_53


@nb.njit(cache=True)
def uniforms(stream, keys):
    out = np.empty(keys.shape[0], dtype=np.float64)
    for i in range(keys.shape[0]):
        out[i] = uniform(stream, keys[i])
    return out


@nb.njit(cache=True)
def child_keys(parent_keys, letter_codes):
    out = np.empty(parent_keys.shape[0], dtype=np.uint64)
    for i in range(parent_keys.shape[0]):
        out[i] = child_key(parent_keys[i], letter_codes[i])
    return out


def seed_to_u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & MASK64)


def py_splitmix64(x: int) -> int:
    """Pure-Python reference used by tests to pin the compiled version."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def key_of_letters(codes) -> np.uint64:
    """Fold ``child_key`` over a sequence of positive letter codes."""
    k = ROOT_KEY
    for c in codes:
        k = np.uint64(child_key(k, np.uint64(c)))
    return k
