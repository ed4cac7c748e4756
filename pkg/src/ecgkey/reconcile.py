"""Syndrome-based information reconciliation.

Alice publishes ``z = H x`` for each block.  Bob looks for the member of
the coset ``{w : H w = z}`` closest to his own block ``y``; equivalently
the minimum-weight error ``e`` with ``H e = z + H y``.  Two search routes
are provided:

``coset``
    Enumerate the whole coset, ``2**(N - rank)`` words, from a particular
    solution plus the kernel span.  Exact and fast while the kernel
    dimension stays around 20 or below (the default 160x142 code has 18).
``search``
    Meet-in-the-middle over error patterns of increasing weight using
    precomputed syndrome tables of low-weight patterns.  Cost grows with
    ``w_max`` instead of the kernel dimension.

Ties between equally distant candidates are broken by the numerically
smallest error pattern, i.e. the lexicographically smallest bit string.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DecodeFailureError,
    DimensionMismatchError,
    InvalidParamsError,
    OversizedInstanceError,
)
from .gf2 import BitBlock, Gf2Matrix, echelon, matvec, pack_words, unpack_word_row

DEFAULT_COSET_LIMIT = 20
EXHAUSTIVE_MAX_N = 24
_TABLE_BUDGET = 2_000_000


@dataclass(frozen=True)
class CodeConfig:
    n_bits: int = 160
    syndrome_bits: int = 142
    seed: int = 0
    w_max: int | None = 4

    def __post_init__(self):
        if not 0 < self.syndrome_bits < self.n_bits:
            raise InvalidParamsError(
                f"need 0 < M < N, got M={self.syndrome_bits}, N={self.n_bits}"
            )
        if self.w_max is not None and self.w_max < 0:
            raise InvalidParamsError("w_max must be >= 0")

    @property
    def key_bits(self) -> int:
        return self.n_bits - self.syndrome_bits

    def check_symbol_bits(self, b: int) -> None:
        if self.n_bits % b:
            raise InvalidParamsError(f"N={self.n_bits} is not a multiple of b={b}")


def syndrome(h: Gf2Matrix, x_bits: BitBlock) -> BitBlock:
    return matvec(h, x_bits)


def _check_dims(h: Gf2Matrix, z: BitBlock, y: BitBlock | None = None) -> None:
    if z.length != h.n_rows:
        raise DimensionMismatchError(f"syndrome has {z.length} bits, H has {h.n_rows} rows")
    if y is not None and y.length != h.n_cols:
        raise DimensionMismatchError(f"word has {y.length} bits, H has {h.n_cols} columns")


def _pick_min(words: np.ndarray) -> tuple[int, int]:
    """Index and weight of the lightest row; ties go to the smallest row."""
    weights = np.bitwise_count(words).sum(axis=1, dtype=np.int64)
    wmin = int(weights.min())
    idx = np.flatnonzero(weights == wmin)
    if idx.size > 1:
        sub = words[idx]
        keys = tuple(sub[:, k] for k in range(sub.shape[1] - 1, -1, -1))
        idx = idx[np.lexsort(keys)]
    return int(idx[0]), wmin


class _CosetSpace:
    """Particular-solution solver plus the packed kernel span of ``H``."""

    def __init__(self, h: Gf2Matrix):
        self.h = h
        self.ech = echelon(h)
        self.n = h.n_cols
        basis = self.ech.kernel()
        self.dim = len(basis)
        span = np.zeros((1, max(1, (self.n + 63) // 64)), dtype=np.uint64)
        for row in pack_words(basis, self.n):
            span = np.concatenate([span, span ^ row])
        self.span = span

    def nearest(self, z: int, target: int) -> tuple[int, int]:
        """Minimum-weight ``e = w ^ target`` over coset members ``w``."""
        p = self.ech.solve(z)
        shifted = self.span ^ pack_words([p ^ target], self.n)[0]
        i, wt = _pick_min(shifted)
        return unpack_word_row(shifted[i], self.n), wt


@functools.lru_cache(maxsize=8)
def _coset_space(h: Gf2Matrix) -> _CosetSpace:
    return _CosetSpace(h)


@functools.lru_cache(maxsize=8)
def _pattern_tables(h: Gf2Matrix, half: int) -> list[dict[int, list[int]]]:
    """``tables[k][syn]`` lists the weight-``k`` patterns with syndrome ``syn``."""
    n = h.n_cols
    total = sum(math.comb(n, k) for k in range(half + 1))
    if total > _TABLE_BUDGET:
        raise InvalidParamsError(
            f"weight-{half} pattern tables need {total} entries; lower w_max"
        )
    cols = h.column_syndromes()
    tables = []
    for k in range(half + 1):
        table: dict[int, list[int]] = {}
        for combo in itertools.combinations(range(n), k):
            s = 0
            pat = 0
            for j in combo:
                s ^= cols[j]
                pat |= 1 << (n - 1 - j)
            table.setdefault(s, []).append(pat)
        tables.append(table)
    return tables


def _weight_search(h: Gf2Matrix, s: int, w_max: int) -> int | None:
    """Smallest minimum-weight ``e`` with ``H e = s`` and weight <= w_max."""
    if s == 0:
        return 0
    half = (w_max + 1) // 2
    tables = _pattern_tables(h, half)
    for w in range(1, w_max + 1):
        a = w // 2
        b = w - a
        best = None
        right = tables[b]
        for syn_a, pats_a in tables[a].items():
            pats_b = right.get(s ^ syn_a)
            if not pats_b:
                continue
            for pa in pats_a:
                for pb in pats_b:
                    if pa & pb == 0:
                        cand = pa | pb
                        if best is None or cand < best:
                            best = cand
        if best is not None:
            return best
    return None


def _route(h: Gf2Matrix, method: str, coset_limit: int) -> str:
    if method == "auto":
        return "coset" if h.n_cols - echelon(h).rank <= coset_limit else "search"
    if method not in ("coset", "search"):
        raise InvalidParamsError(f"unknown decode method {method!r}")
    return method


def decode(
    h: Gf2Matrix,
    z: BitBlock,
    y_bits: BitBlock,
    w_max: int | None = 4,
    method: str = "auto",
    coset_limit: int = DEFAULT_COSET_LIMIT,
) -> BitBlock:
    """Bob's estimate of Alice's block: the coset member nearest ``y_bits``.

    ``w_max=None`` removes the distance cap (coset route only).  Raises
    :class:`DecodeFailureError` when no member lies within ``w_max``.
    """
    _check_dims(h, z, y_bits)
    route = _route(h, method, coset_limit)
    if route == "coset":
        e, wt = _coset_space(h).nearest(z.value, y_bits.value)
        if w_max is not None and wt > w_max:
            raise DecodeFailureError(f"nearest coset member is {wt} bits away (w_max={w_max})")
    else:
        cap = h.n_cols if w_max is None else w_max
        s = z.value ^ matvec(h, y_bits).value
        e = _weight_search(h, s, cap)
        if e is None:
            raise DecodeFailureError(f"no error pattern of weight <= {cap} matches the syndrome")
    return BitBlock(h.n_cols, y_bits.value ^ e)


@functools.lru_cache(maxsize=8)
def _all_syndromes(h: Gf2Matrix) -> np.ndarray:
    """Syndrome of every N-bit word, indexed by the word's integer value."""
    syn = np.zeros(1, dtype=np.uint64)
    for c in reversed(h.column_syndromes()):
        syn = np.concatenate([syn, syn ^ np.uint64(c)])
    return syn


def exhaustive_decode(h: Gf2Matrix, z: BitBlock, y_bits: BitBlock) -> BitBlock:
    """Reference decoder: list every word with syndrome ``z``, keep the nearest.

    Builds the syndrome of all ``2**N`` words, so it shares no code with
    :func:`decode` beyond the matrix type.
    """
    _check_dims(h, z, y_bits)
    if h.n_cols > EXHAUSTIVE_MAX_N:
        raise OversizedInstanceError(f"N={h.n_cols} exceeds {EXHAUSTIVE_MAX_N}")
    members = np.flatnonzero(_all_syndromes(h) == np.uint64(z.value)).astype(np.uint64)
    if members.size == 0:
        raise DecodeFailureError("syndrome is not reachable by any word")
    errors = members ^ np.uint64(y_bits.value)
    weights = np.bitwise_count(errors)
    best = errors[weights == weights.min()].min()
    return BitBlock(h.n_cols, y_bits.value ^ int(best))


def coset_members(h: Gf2Matrix, z: BitBlock) -> list[int]:
    """All words with syndrome ``z`` (small N only), ascending."""
    _check_dims(h, z)
    if h.n_cols > EXHAUSTIVE_MAX_N:
        raise OversizedInstanceError(f"N={h.n_cols} exceeds {EXHAUSTIVE_MAX_N}")
    return [int(v) for v in np.flatnonzero(_all_syndromes(h) == np.uint64(z.value))]


def eve_decode(
    h: Gf2Matrix,
    z: BitBlock,
    w_max: int = 2,
    coset_limit: int = DEFAULT_COSET_LIMIT,
) -> BitBlock:
    """Eve's prior-free guess: the lightest member of the coset of ``z``.

    Exact when the coset is small enough to enumerate.  Otherwise a greedy
    descent starts from the particular solution and applies any sum of at
    most ``w_max`` kernel basis vectors that lowers the weight, until no
    such move remains.
    """
    _check_dims(h, z)
    space_dim = h.n_cols - echelon(h).rank
    if space_dim <= coset_limit:
        e, _ = _coset_space(h).nearest(z.value, 0)
        return BitBlock(h.n_cols, e)
    ech = echelon(h)
    v = ech.solve(z.value)
    basis = ech.kernel()
    moves = [
        functools.reduce(lambda a, b: a ^ b, combo)
        for k in range(1, max(1, w_max) + 1)
        for combo in itertools.combinations(basis, k)
    ]
    improved = True
    while improved:
        improved = False
        for mv in moves:
            cand = v ^ mv
            if cand.bit_count() < v.bit_count():
                v = cand
                improved = True
    return BitBlock(h.n_cols, v)
