"""Privacy amplification matrix design and key extraction.

The amplifier ``A`` (``K x N``, ``K = N - rank(H)``) is chosen so that the
stacked matrix ``[H; A]`` has rank ``N``.  Then ``x -> (H x, A x)`` is a
bijection, which is exactly what makes ``A`` restricted to the kernel of
``H`` a bijection onto ``{0,1}^K``: for uniform blocks the key is uniform
and independent of the published syndrome.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NotFullRankError, OversizedInstanceError
from .gf2 import BitBlock, Gf2Matrix, XorBasis, bits_to_int, matvec, rank, rank_of_rows

EXHAUSTIVE_MAX_N = 24


@dataclass(frozen=True)
class AmplifierSpec:
    a: Gf2Matrix
    h_ref: Gf2Matrix

    @property
    def key_bits(self) -> int:
        return self.a.n_rows

    def to_json(self) -> dict:
        return {"A": self.a.to_json(), "H": self.h_ref.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "AmplifierSpec":
        return cls(Gf2Matrix.from_json(obj["A"]), Gf2Matrix.from_json(obj["H"]))


def make_privacy_matrix(h: Gf2Matrix, seed: int) -> AmplifierSpec:
    """Draw random rows, keeping those that raise the rank of ``[H; A]``."""
    m, n = h.shape
    if m >= n or rank(h) != m:
        raise NotFullRankError(f"H must be full row rank with M < N, got {m}x{n}")
    rng = np.random.default_rng(seed)
    basis = XorBasis(h.rows)
    kept: list[int] = []
    while len(basis) < n:
        cand = bits_to_int(rng.integers(0, 2, size=n, dtype=np.uint8))
        if basis.add(cand):
            kept.append(cand)
    return AmplifierSpec(Gf2Matrix(tuple(kept), n), h)


def extract_key(spec: AmplifierSpec, bits: BitBlock) -> BitBlock:
    if bits.length != spec.a.n_cols:
        raise DimensionMismatchError(f"block has {bits.length} bits, A has {spec.a.n_cols} columns")
    return matvec(spec.a, bits)


@dataclass(frozen=True)
class SecrecyReport:
    mode: str
    stacked_rank: int
    n_bits: int
    key_bits: int
    key_uniform: bool | None = None
    conditionally_uniform: bool | None = None
    mutual_information_bits: float | None = None

    @property
    def passed(self) -> bool:
        ok = self.stacked_rank == self.n_bits
        if self.mode == "exhaustive":
            ok = ok and bool(self.key_uniform) and bool(self.conditionally_uniform)
            ok = ok and abs(self.mutual_information_bits) < 1e-12
        return ok


def _mutual_information(joint: np.ndarray) -> float:
    p = joint / joint.sum()
    pz = p.sum(axis=1, keepdims=True)
    pk = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / (pz @ pk)[nz])))


def verify_secrecy(spec: AmplifierSpec, exhaustive: bool = True) -> SecrecyReport:
    """Check that keys are uniform and independent of the syndrome.

    The structural check (any size) is the stacked-rank condition.  The
    exhaustive mode also pushes all ``2**N`` equiprobable blocks through
    ``H`` and ``A`` and tabulates the joint law of ``(z, key)``.
    """
    h, a = spec.h_ref, spec.a
    n = h.n_cols
    if a.n_cols != n:
        raise DimensionMismatchError("A and H have different column counts")
    stacked = rank_of_rows(h.rows + a.rows)
    if not exhaustive:
        return SecrecyReport("structural", stacked, n, a.n_rows)
    if n > EXHAUSTIVE_MAX_N:
        raise OversizedInstanceError(f"N={n} exceeds {EXHAUSTIVE_MAX_N}")

    # Accumulate H x and A x for every x by doubling over columns.
    zs = np.zeros(1, dtype=np.int64)
    ks = np.zeros(1, dtype=np.int64)
    for cz, ck in zip(reversed(h.column_syndromes()), reversed(a.column_syndromes())):
        zs = np.concatenate([zs, zs ^ cz])
        ks = np.concatenate([ks, ks ^ ck])
    n_z, n_k = 1 << h.n_rows, 1 << a.n_rows
    joint = np.zeros((n_z, n_k), dtype=np.int64)
    np.add.at(joint, (zs, ks), 1)

    key_marginal = joint.sum(axis=0)
    key_uniform = bool(np.all(key_marginal == key_marginal[0]))
    rows = joint[joint.sum(axis=1) > 0]
    cond_uniform = bool(np.all(rows == rows[:, :1]))
    mi = _mutual_information(joint.astype(float))
    return SecrecyReport("exhaustive", stacked, n, a.n_rows, key_uniform, cond_uniform, mi)
