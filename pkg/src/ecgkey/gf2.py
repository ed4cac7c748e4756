"""Dense linear algebra over GF(2).

Rows and vectors are stored as Python integers used as bitsets.  Column
``j`` of an ``n``-column object is bit ``n - 1 - j``, so column 0 is the
most significant bit.  With this layout the integer order of two vectors
equals the lexicographic order of their bit strings, and hex dumps read
left to right in column order.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidDimsError,
    NoSolutionError,
)


def _hex_encode(value: int, length: int) -> str:
    pad = (-length) % 4
    width = (length + pad) // 4
    return format(value << pad, f"0{width}x") if width else ""


def _hex_decode(text: str, length: int) -> int:
    pad = (-length) % 4
    if len(text) != (length + pad) // 4:
        raise ValueError(f"hex string of {len(text)} digits cannot hold {length} bits")
    value = int(text, 16) if text else 0
    if value & ((1 << pad) - 1):
        raise ValueError("nonzero padding bits in hex string")
    return value >> pad


@dataclass(frozen=True)
class BitBlock:
    """A fixed-length bit vector (element 0 is the most significant bit)."""

    length: int
    value: int = 0

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if self.value < 0 or self.value >> self.length:
            raise ValueError(f"value does not fit in {self.length} bits")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitBlock":
        value = 0
        n = 0
        for bit in bits:
            value = (value << 1) | (int(bit) & 1)
            n += 1
        return cls(n, value)

    @classmethod
    def from_hex(cls, text: str, length: int) -> "BitBlock":
        return cls(length, _hex_decode(text, length))

    @classmethod
    def zeros(cls, length: int) -> "BitBlock":
        return cls(length, 0)

    def to_array(self) -> np.ndarray:
        return int_to_bits(self.value, self.length)

    def hex(self) -> str:
        return _hex_encode(self.value, self.length)

    def weight(self) -> int:
        return self.value.bit_count()

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.length:
            raise IndexError(i)
        return (self.value >> (self.length - 1 - i)) & 1

    def __xor__(self, other: "BitBlock") -> "BitBlock":
        if other.length != self.length:
            raise DimensionMismatchError(f"{self.length} vs {other.length} bits")
        return BitBlock(self.length, self.value ^ other.value)

    def __str__(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""


def int_to_bits(value: int, length: int) -> np.ndarray:
    """Unpack an integer bitset into a uint8 array, MSB first."""
    if length == 0:
        return np.zeros(0, dtype=np.uint8)
    nbytes = (length + 7) // 8
    raw = np.frombuffer((value << (8 * nbytes - length)).to_bytes(nbytes, "big"), dtype=np.uint8)
    return np.unpackbits(raw)[:length].copy()


def bits_to_int(bits: Sequence[int] | np.ndarray) -> int:
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.size == 0:
        return 0
    packed = np.packbits(arr)
    return int.from_bytes(packed.tobytes(), "big") >> ((-arr.size) % 8)


def pack_words(values: Sequence[int], length: int) -> np.ndarray:
    """Pack integer bitsets into an ``(n, ceil(length/64))`` uint64 array.

    Word 0 holds columns 0..63 with column 0 as its top bit, so comparing
    rows word by word reproduces the integer order.
    """
    n_words = max(1, (length + 63) // 64)
    shift = 64 * n_words - length
    nbytes = 8 * n_words
    buf = b"".join((v << shift).to_bytes(nbytes, "big") for v in values)
    out = np.frombuffer(buf, dtype=">u8").astype(np.uint64)
    return out.reshape(len(values), n_words)


def unpack_word_row(row: np.ndarray, length: int) -> int:
    value = 0
    for w in row:
        value = (value << 64) | int(w)
    return value >> (64 * len(row) - length)


@dataclass(frozen=True)
class Gf2Matrix:
    """Immutable dense GF(2) matrix with integer-bitset rows."""

    rows: tuple[int, ...]
    n_cols: int

    def __post_init__(self):
        if self.n_cols < 0:
            raise InvalidDimsError("n_cols must be non-negative")
        limit = 1 << self.n_cols
        for r in self.rows:
            if r < 0 or r >= limit:
                raise ValueError(f"row {r:#x} does not fit in {self.n_cols} columns")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.rows), self.n_cols)

    @classmethod
    def from_array(cls, arr) -> "Gf2Matrix":
        a = np.asarray(arr, dtype=np.uint8) & 1
        if a.ndim != 2:
            raise InvalidDimsError("expected a 2-D array")
        return cls(tuple(bits_to_int(row) for row in a), a.shape[1])

    @classmethod
    def identity(cls, n: int) -> "Gf2Matrix":
        return cls(tuple(1 << (n - 1 - i) for i in range(n)), n)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Gf2Matrix":
        return cls((0,) * rows, cols)

    def to_array(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, self.n_cols), dtype=np.uint8)
        return np.stack([int_to_bits(r, self.n_cols) for r in self.rows])

    def row(self, i: int) -> BitBlock:
        return BitBlock(self.n_cols, self.rows[i])

    def vstack(self, other: "Gf2Matrix") -> "Gf2Matrix":
        if other.n_cols != self.n_cols:
            raise DimensionMismatchError(f"{self.n_cols} vs {other.n_cols} columns")
        return Gf2Matrix(self.rows + other.rows, self.n_cols)

    def column_syndromes(self) -> tuple[int, ...]:
        """Column ``j`` as an ``n_rows``-bit integer (row 0 most significant)."""
        return _column_syndromes(self)

    def to_json(self) -> dict:
        return {
            "rows": self.n_rows,
            "cols": self.n_cols,
            "data": [_hex_encode(r, self.n_cols) for r in self.rows],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Gf2Matrix":
        rows, cols = int(obj["rows"]), int(obj["cols"])
        data = obj["data"]
        if len(data) != rows:
            raise InvalidDimsError(f"declared {rows} rows, found {len(data)}")
        return cls(tuple(_hex_decode(h, cols) for h in data), cols)


@functools.lru_cache(maxsize=64)
def _column_syndromes(m: Gf2Matrix) -> tuple[int, ...]:
    arr = m.to_array()
    return tuple(bits_to_int(arr[:, j]) for j in range(m.n_cols))


def _parity(x: int) -> int:
    return x.bit_count() & 1


def matvec(m: Gf2Matrix, v: BitBlock) -> BitBlock:
    """Return ``m · v`` over GF(2)."""
    if v.length != m.n_cols:
        raise DimensionMismatchError(f"matrix has {m.n_cols} columns, vector has {v.length} bits")
    out = 0
    for r in m.rows:
        out = (out << 1) | _parity(r & v.value)
    return BitBlock(m.n_rows, out)


class Echelon:
    """Reduced row echelon form of a matrix plus the row operations used.

    ``combos[k]`` records which original rows were summed into reduced row
    ``k``; rows past ``rank`` are zero and their combos encode the linear
    dependencies among the original rows.
    """

    def __init__(self, m: Gf2Matrix):
        n, n_rows = m.n_cols, m.n_rows
        work = [[r, 1 << (n_rows - 1 - i)] for i, r in enumerate(m.rows)]
        pivots: list[int] = []
        rank = 0
        for col in range(n):
            if rank == n_rows:
                break
            bit = 1 << (n - 1 - col)
            piv = next((i for i in range(rank, n_rows) if work[i][0] & bit), None)
            if piv is None:
                continue
            work[rank], work[piv] = work[piv], work[rank]
            prow, pcombo = work[rank]
            for i in range(n_rows):
                if i != rank and work[i][0] & bit:
                    work[i][0] ^= prow
                    work[i][1] ^= pcombo
            pivots.append(col)
            rank += 1
        self.n_cols = n
        self.n_rows = n_rows
        self.rank = rank
        self.pivots = tuple(pivots)
        self.reduced = tuple(w[0] for w in work)
        self.combos = tuple(w[1] for w in work)

    def solve(self, s: int) -> int:
        for k in range(self.rank, self.n_rows):
            if _parity(self.combos[k] & s):
                raise NoSolutionError("syndrome is outside the column space")
        v = 0
        n = self.n_cols
        for k, col in enumerate(self.pivots):
            if _parity(self.combos[k] & s):
                v |= 1 << (n - 1 - col)
        return v

    def kernel(self) -> list[int]:
        n = self.n_cols
        pivot_set = set(self.pivots)
        basis = []
        for f in range(n):
            if f in pivot_set:
                continue
            fbit = 1 << (n - 1 - f)
            v = fbit
            for k, col in enumerate(self.pivots):
                if self.reduced[k] & fbit:
                    v |= 1 << (n - 1 - col)
            basis.append(v)
        return basis


@functools.lru_cache(maxsize=64)
def echelon(m: Gf2Matrix) -> Echelon:
    return Echelon(m)


def rank(m: Gf2Matrix) -> int:
    return echelon(m).rank


def rank_of_rows(rows: Iterable[int]) -> int:
    """Rank of a set of integer rows, via an XOR basis keyed on leading bit."""
    basis: dict[int, int] = {}
    for r in rows:
        while r:
            lead = r.bit_length()
            if lead in basis:
                r ^= basis[lead]
            else:
                basis[lead] = r
                break
    return len(basis)


class XorBasis:
    """Incremental row basis used to grow full-rank matrices row by row."""

    def __init__(self, rows: Iterable[int] = ()):
        self._basis: dict[int, int] = {}
        for r in rows:
            self.add(r)

    def __len__(self) -> int:
        return len(self._basis)

    def reduce(self, r: int) -> int:
        while r:
            lead = r.bit_length()
            if lead not in self._basis:
                return r
            r ^= self._basis[lead]
        return 0

    def add(self, r: int) -> bool:
        """Insert ``r``; return True when it was independent of the basis."""
        red = self.reduce(r)
        if red:
            self._basis[red.bit_length()] = red
            return True
        return False


def random_full_rank(rows: int, cols: int, seed: int) -> Gf2Matrix:
    """Uniformly random ``rows × cols`` matrix of rank ``rows``.

    Rows are drawn one at a time and rejected when dependent on the rows
    already kept, which is uniform over full-rank matrices.  A side effect
    is nesting: for a fixed seed the ``M``-row matrix is the first ``M``
    rows of any taller one.
    """
    if rows < 0 or cols <= 0 or rows > cols:
        raise InvalidDimsError(f"need 0 <= rows <= cols, got {rows}x{cols}")
    rng = np.random.default_rng(seed)
    basis = XorBasis()
    kept: list[int] = []
    while len(kept) < rows:
        cand = bits_to_int(rng.integers(0, 2, size=cols, dtype=np.uint8))
        if basis.add(cand):
            kept.append(cand)
    return Gf2Matrix(tuple(kept), cols)


def null_space_basis(m: Gf2Matrix) -> list[BitBlock]:
    return [BitBlock(m.n_cols, v) for v in echelon(m).kernel()]


def solve_particular(m: Gf2Matrix, s: BitBlock) -> BitBlock:
    """Some ``v`` with ``m · v = s``; raises :class:`NoSolutionError` if none."""
    if s.length != m.n_rows:
        raise DimensionMismatchError(f"matrix has {m.n_rows} rows, syndrome has {s.length} bits")
    return BitBlock(m.n_cols, echelon(m).solve(s.value))
