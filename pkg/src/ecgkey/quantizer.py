"""Coincidence-entropy quantizer design for paired IPI sequences.

Both parties quantize with their own threshold vectors.  A pair of
symbols *coincides* when both land on the same level.  With ``p_l`` the
empirical mass of the cell ``R_l^x x R_l^y`` and ``P_c = sum(p_l)``, the
design objective is

    J = sum_l p_l * log2(P_c / p_l)  =  P_c * H(level | coincidence)

which rewards quantizers that agree often *and* spread agreements evenly
over the levels.  Thresholds are searched on the edges of a joint
histogram, where ``J`` is piecewise constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateHistogramError,
    EmptyInputError,
    InvalidParamsError,
    InvalidThresholdsError,
    SymbolOutOfRangeError,
    TooFewDistinctValuesError,
)

MAPPINGS = ("gray", "natural")
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class JointHistogram:
    x_edges: np.ndarray
    y_edges: np.ndarray
    counts: np.ndarray
    n_total: int
    _prefix: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.counts.shape != (len(self.x_edges) - 1, len(self.y_edges) - 1):
            raise ValueError("counts shape does not match the edge grids")
        if int(self.counts.sum()) != self.n_total:
            raise ValueError("n_total must equal the total count")
        prefix = np.zeros((self.counts.shape[0] + 1, self.counts.shape[1] + 1), dtype=np.int64)
        prefix[1:, 1:] = self.counts.cumsum(axis=0).cumsum(axis=1)
        object.__setattr__(self, "_prefix", prefix)

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape


def build_joint_histogram(pairs, grid_resolution_ms: float = 1.0) -> JointHistogram:
    """Histogram of ``(x, y)`` pairs on grids spanning one step past the data.

    ``pairs`` is a :class:`~ecgkey.ipi.PairedIpis` or an ``(x, y)`` tuple.
    A value lying exactly on an edge falls in the bin above it, matching
    :func:`quantize`.
    """
    if hasattr(pairs, "x_ms"):
        x, y = pairs.x_ms, pairs.y_ms
    else:
        x, y = pairs
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or x.size != y.size:
        raise EmptyInputError("need at least one (x, y) pair of equal-length vectors")
    if not grid_resolution_ms > 0:
        raise InvalidParamsError("grid_resolution_ms must be positive")
    x_edges = _grid(x, grid_resolution_ms)
    y_edges = _grid(y, grid_resolution_ms)
    counts, _, _ = np.histogram2d(x, y, bins=[x_edges, y_edges])
    return JointHistogram(x_edges, y_edges, counts.astype(np.int64), int(x.size))


def _grid(v: np.ndarray, res: float) -> np.ndarray:
    lo = float(v.min()) - res
    nbins = int(np.ceil((float(v.max()) - float(v.min())) / res)) + 2
    return lo + res * np.arange(nbins + 1)


def _objective_from_masses(counts: np.ndarray, n: int) -> np.ndarray:
    """Objective along the last axis of per-level coincidence counts."""
    p = counts / n
    pc = p.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(pc / np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def _level_counts(prefix: np.ndarray, bx: np.ndarray, by: np.ndarray) -> np.ndarray:
    """Counts in the diagonal cells delimited by edge-index boundaries.

    ``bx`` and ``by`` have shape ``(..., L + 1)`` and include the outer
    boundaries ``0`` and ``n_bins``.
    """
    x0, x1 = bx[..., :-1], bx[..., 1:]
    y0, y1 = by[..., :-1], by[..., 1:]
    return prefix[x1, y1] - prefix[x0, y1] - prefix[x1, y0] + prefix[x0, y0]


def _objective_idx(hist: JointHistogram, bx, by) -> np.ndarray:
    return _objective_from_masses(_level_counts(hist._prefix, np.asarray(bx), np.asarray(by)), hist.n_total)


def _check_thresholds(tau: np.ndarray, name: str) -> None:
    if tau.ndim != 1 or not np.all(np.isfinite(tau)):
        raise InvalidThresholdsError(f"{name} must be a finite 1-D vector")
    if tau.size > 1 and not np.all(np.diff(tau) > 0):
        raise InvalidThresholdsError(f"{name} must be strictly increasing")


def _edge_boundaries(edges: np.ndarray, tau: np.ndarray) -> np.ndarray:
    nbins = len(edges) - 1
    inner = np.clip(np.searchsorted(edges, tau, side="left"), 0, nbins)
    return np.concatenate([[0], inner, [nbins]]).astype(np.int64)


def coincidence_objective(hist: JointHistogram, tau_x, tau_y) -> float:
    """Coincidence entropy-times-frequency of the quantizer pair, in bits.

    Thresholds are resolved to the histogram grid: a threshold acts as the
    first edge at or above it.
    """
    tx = np.asarray(tau_x, dtype=float).reshape(-1)
    ty = np.asarray(tau_y, dtype=float).reshape(-1)
    _check_thresholds(tx, "tau_x")
    _check_thresholds(ty, "tau_y")
    if tx.size != ty.size:
        raise InvalidThresholdsError("tau_x and tau_y must have equal lengths")
    bx = _edge_boundaries(hist.x_edges, tx)
    by = _edge_boundaries(hist.y_edges, ty)
    return float(_objective_idx(hist, bx, by))


@dataclass(frozen=True)
class QuantizerSpec:
    levels: int
    bits: int
    tau_x: tuple[float, ...]
    tau_y: tuple[float, ...]
    bit_mapping: str = "gray"

    def __post_init__(self):
        if self.bits < 0 or self.levels != 1 << self.bits:
            raise InvalidParamsError(f"levels must equal 2**bits, got L={self.levels}, b={self.bits}")
        if self.bit_mapping not in MAPPINGS:
            raise InvalidParamsError(f"bit_mapping must be one of {MAPPINGS}")
        for name in ("tau_x", "tau_y"):
            tau = np.asarray(getattr(self, name), dtype=float)
            if tau.size != self.levels - 1:
                raise InvalidThresholdsError(f"{name} needs {self.levels - 1} thresholds")
            _check_thresholds(tau, name)

    def with_mapping(self, mapping: str) -> "QuantizerSpec":
        return QuantizerSpec(self.levels, self.bits, self.tau_x, self.tau_y, mapping)

    def to_json(self) -> dict:
        return {
            "levels": self.levels,
            "bits": self.bits,
            "tau_x": list(self.tau_x),
            "tau_y": list(self.tau_y),
            "bit_mapping": self.bit_mapping,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "QuantizerSpec":
        return cls(
            int(obj["levels"]),
            int(obj["bits"]),
            tuple(float(t) for t in obj["tau_x"]),
            tuple(float(t) for t in obj["tau_y"]),
            obj.get("bit_mapping", "gray"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "QuantizerSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


def _first_best(values: np.ndarray) -> int:
    """Index of the first entry within tolerance of the maximum."""
    return int(np.flatnonzero(values >= values.max() - _TIE_TOL)[0])


def _search_pair(hist: JointHistogram, bx: np.ndarray, by: np.ndarray, k: int, wmin: int) -> tuple[int, int]:
    """Best new boundary pair inserted at position ``k`` (between k-1 and k).

    Both resulting intervals must stay at least ``wmin`` bins wide.
    """
    cx = np.arange(bx[k - 1] + wmin, bx[k] - wmin + 1)
    cy = np.arange(by[k - 1] + wmin, by[k] - wmin + 1)
    if cx.size == 0 or cy.size == 0:
        raise DegenerateHistogramError("no free grid edge left to place a distinct threshold")
    gx, gy = np.meshgrid(cx, cy, indexing="ij")
    gx, gy = gx.ravel(), gy.ravel()
    bxs = np.insert(np.broadcast_to(bx, (gx.size, bx.size)), k, gx, axis=1)
    bys = np.insert(np.broadcast_to(by, (gy.size, by.size)), k, gy, axis=1)
    i = _first_best(_objective_idx(hist, bxs, bys))
    return int(gx[i]), int(gy[i])


def _refine(hist: JointHistogram, bx: np.ndarray, by: np.ndarray, wmin: int = 1, max_sweeps: int = 200):
    """Coordinate ascent over single thresholds until no move helps."""
    current = float(_objective_idx(hist, bx, by))
    for _ in range(max_sweeps):
        moved = False
        for k in range(1, bx.size - 1):
            for b in (bx, by):
                cand = np.arange(b[k - 1] + wmin, b[k + 1] - wmin + 1)
                if cand.size < 2:
                    continue
                trial_b = np.broadcast_to(b, (cand.size, b.size)).copy()
                trial_b[:, k] = cand
                if b is bx:
                    vals = _objective_idx(hist, trial_b, np.broadcast_to(by, trial_b.shape))
                else:
                    vals = _objective_idx(hist, np.broadcast_to(bx, trial_b.shape), trial_b)
                i = _first_best(vals)
                if vals[i] > current + _TIE_TOL:
                    b[k] = cand[i]
                    current = float(vals[i])
                    moved = True
        if not moved:
            break
    return bx, by


def design_stages(hist: JointHistogram, b: int, refine: bool = True, mapping: str = "gray") -> list[QuantizerSpec]:
    """Quantizers for 1..b bits, each grown from the previous one.

    Level 2 is a joint exhaustive search over edge pairs.  Each doubling
    keeps the previous thresholds in the even slots and searches each new
    odd slot, jointly for both parties, inside its interval; a coordinate
    ascent then polishes all thresholds when ``refine`` is set.
    """
    if not 1 <= b <= 8:
        raise InvalidParamsError(f"b must be in 1..8, got {b}")
    if np.count_nonzero(hist.counts) <= 1:
        raise DegenerateHistogramError("all mass sits in a single cell")
    nx, ny = hist.shape
    if min(nx, ny) < 1 << b:
        raise DegenerateHistogramError("grid too coarse for the requested number of levels")

    bx = np.array([0, nx], dtype=np.int64)
    by = np.array([0, ny], dtype=np.int64)
    stages = []
    for stage in range(1, b + 1):
        # Intervals keep room for every later doubling.
        wmin = 1 << (b - stage)
        # Insert into every interval, left to right; after each insertion
        # the next original interval shifts one slot to the right.
        k = 1
        while k < bx.size:
            ix, iy = _search_pair(hist, bx, by, k, wmin)
            bx = np.insert(bx, k, ix)
            by = np.insert(by, k, iy)
            k += 2
        if refine:
            bx, by = _refine(hist, bx, by, wmin)
        stages.append(
            QuantizerSpec(
                1 << stage,
                stage,
                tuple(float(v) for v in hist.x_edges[bx[1:-1]]),
                tuple(float(v) for v in hist.y_edges[by[1:-1]]),
                mapping,
            )
        )
    return stages


def optimize_thresholds(hist: JointHistogram, b: int, refine: bool = True, mapping: str = "gray") -> QuantizerSpec:
    return design_stages(hist, b, refine=refine, mapping=mapping)[-1]


def quantize(values, tau) -> np.ndarray:
    """Symbols in ``1..len(tau)+1``; a value equal to a threshold goes up."""
    tau = np.asarray(tau, dtype=float).reshape(-1)
    _check_thresholds(tau, "tau")
    return np.searchsorted(tau, np.asarray(values, dtype=float), side="right") + 1


def gray_encode(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


def gray_decode(g: np.ndarray) -> np.ndarray:
    n = g.copy()
    shift = g >> 1
    while np.any(shift):
        n ^= shift
        shift >>= 1
    return n


def symbols_to_bits(symbols, b: int, mapping: str = "gray") -> np.ndarray:
    """Concatenate ``b``-bit MSB-first codes of ``symbol - 1``."""
    if mapping not in MAPPINGS:
        raise InvalidParamsError(f"mapping must be one of {MAPPINGS}")
    s = np.asarray(symbols, dtype=np.int64).reshape(-1)
    if s.size and (s.min() < 1 or s.max() > 1 << b):
        raise SymbolOutOfRangeError(f"symbols must lie in 1..{1 << b}")
    codes = s - 1
    if mapping == "gray":
        codes = gray_encode(codes)
    shifts = np.arange(b - 1, -1, -1)
    return ((codes[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def bits_to_symbols(bits, b: int, mapping: str = "gray") -> np.ndarray:
    if mapping not in MAPPINGS:
        raise InvalidParamsError(f"mapping must be one of {MAPPINGS}")
    arr = np.asarray(bits, dtype=np.int64).reshape(-1)
    if arr.size % b:
        raise InvalidParamsError(f"bit count {arr.size} is not a multiple of b={b}")
    codes = (arr.reshape(-1, b) << np.arange(b - 1, -1, -1)).sum(axis=1)
    if mapping == "gray":
        codes = gray_decode(codes)
    return codes + 1


def uniform_quantizer(values, b: int) -> np.ndarray:
    """Thresholds at the empirical ``k/L`` quantiles (equal-occupancy levels)."""
    v = np.asarray(values, dtype=float).reshape(-1)
    levels = 1 << b
    if np.unique(v).size < levels:
        raise TooFewDistinctValuesError(f"need at least {levels} distinct values")
    q = np.arange(1, levels) / levels
    tau = np.quantile(v, q, method="midpoint")
    if np.any(np.diff(tau) <= 0):
        raise TooFewDistinctValuesError("ties collapse two quantile thresholds; use fewer bits")
    return tau


def uniform_spec(x, y, b: int, mapping: str = "gray") -> QuantizerSpec:
    return QuantizerSpec(
        1 << b,
        b,
        tuple(float(t) for t in uniform_quantizer(x, b)),
        tuple(float(t) for t in uniform_quantizer(y, b)),
        mapping,
    )


def level_occupancy(symbols: Sequence[int], levels: int) -> np.ndarray:
    return np.bincount(np.asarray(symbols, dtype=np.int64) - 1, minlength=levels)
