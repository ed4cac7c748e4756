"""Disagreement rates, key generation rate and mutual-information-rate bounds.

The secret key capacity equals the mutual information rate between the two
observations.  It is bracketed here by two estimators:

* lower: the MIR of Gaussian processes with the same second-order joint
  statistics, from the zero-lag correlation (default) or from the
  averaged-periodogram coherence;
* upper: the plug-in single-symbol mutual information of an equal-frequency
  joint histogram with Miller-Madow bias correction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import signal as sps
from scipy.stats import rankdata

from .errors import InvalidParamsError, LengthMismatchError, TooShortError

_EPS = 1e-12


def _bits(a) -> np.ndarray:
    if hasattr(a, "to_array"):
        return a.to_array()
    return np.asarray(a, dtype=np.uint8).reshape(-1)


def disagreement_rate(a, b) -> float:
    """Fraction of positions where two equal-length bit streams differ."""
    x, y = _bits(a), _bits(b)
    if x.size != y.size:
        raise LengthMismatchError(f"{x.size} vs {y.size} bits")
    if x.size == 0:
        return 0.0
    return float(np.count_nonzero(x != y)) / x.size


def per_symbol_disagreement_pct(a, b, bits_per_symbol: int) -> float:
    """Average over symbols of the percentage of differing bits in each group."""
    x, y = _bits(a), _bits(b)
    if x.size != y.size:
        raise LengthMismatchError(f"{x.size} vs {y.size} bits")
    if x.size % bits_per_symbol:
        raise LengthMismatchError(f"{x.size} bits do not split into {bits_per_symbol}-bit symbols")
    if x.size == 0:
        return 0.0
    per_symbol = (x != y).reshape(-1, bits_per_symbol).mean(axis=1)
    return 100.0 * float(per_symbol.mean())


def key_rate(n_bits: int, syndrome_bits: int, b: int, mean_ipi_s: float) -> float:
    """``(N - M) / N * b / T`` in bit/s."""
    if n_bits <= 0 or not 0 <= syndrome_bits <= n_bits or b <= 0:
        raise InvalidParamsError(f"invalid code/quantizer sizes N={n_bits}, M={syndrome_bits}, b={b}")
    if not mean_ipi_s > 0:
        raise InvalidParamsError("mean IPI must be positive")
    return (n_bits - syndrome_bits) / n_bits * b / mean_ipi_s


@dataclass(frozen=True)
class RateEstimate:
    bps: float
    saturated: bool = False


def _paired(x, y, minimum: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != y.size:
        raise LengthMismatchError(f"{x.size} vs {y.size} samples")
    if x.size < minimum:
        raise TooShortError(f"need at least {minimum} paired samples, got {x.size}")
    return x, y


def mir_lower_gaussian(x, y, mean_ipi_s: float, spectral: bool = False, nperseg: int = 64) -> RateEstimate:
    """Gaussian-equivalent mutual information rate, bit/s."""
    x, y = _paired(x, y, 8)
    if not mean_ipi_s > 0:
        raise InvalidParamsError("mean IPI must be positive")
    if spectral:
        _, coh = sps.coherence(x, y, fs=1.0, nperseg=min(nperseg, x.size))
        coh = np.nan_to_num(coh, nan=0.0)
        saturated = bool(np.any(coh > 1 - _EPS))
        coh = np.clip(coh, 0.0, 1 - _EPS)
        per_symbol = -0.5 * float(np.mean(np.log2(1 - coh)))
    else:
        if np.std(x) == 0 or np.std(y) == 0:
            return RateEstimate(0.0)
        rho2 = float(np.corrcoef(x, y)[0, 1]) ** 2
        saturated = rho2 > 1 - _EPS
        per_symbol = -0.5 * math.log2(1 - min(rho2, 1 - _EPS))
    return RateEstimate(per_symbol / mean_ipi_s, saturated)


def _equal_frequency_bins(v: np.ndarray, bins: int) -> np.ndarray:
    ranks = rankdata(v, method="ordinal") - 1
    return (ranks * bins) // v.size


def mi_upper_single_symbol(x, y, bins: int, mean_ipi_s: float) -> RateEstimate:
    """Miller-Madow corrected plug-in MI of one symbol pair, divided by T."""
    x, y = _paired(x, y, max(bins, 1))
    if bins < 1:
        raise InvalidParamsError("bins must be >= 1")
    if not mean_ipi_s > 0:
        raise InvalidParamsError("mean IPI must be positive")
    n = x.size
    counts = np.zeros((bins, bins), dtype=np.int64)
    np.add.at(counts, (_equal_frequency_bins(x, bins), _equal_frequency_bins(y, bins)), 1)
    p = counts / n
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    nz = p > 0
    mi = float(np.sum(p[nz] * np.log2(p[nz] / np.outer(px, py)[nz])))
    correction = (nz.sum() - (px > 0).sum() - (py > 0).sum() + 1) / (2 * n * math.log(2))
    return RateEstimate(max(0.0, mi - correction) / mean_ipi_s)


@dataclass(frozen=True)
class CapacityBounds:
    lower: float
    upper: float
    crossed: bool
    lower_saturated: bool = False


def secret_key_capacity_bounds(x, y, mean_ipi_s: float, bins: int = 16, spectral: bool = False) -> CapacityBounds:
    """Lower and upper MIR estimates; never swapped, flagged when they cross."""
    lo = mir_lower_gaussian(x, y, mean_ipi_s, spectral=spectral)
    hi = mi_upper_single_symbol(x, y, bins, mean_ipi_s)
    return CapacityBounds(float(lo.bps), float(hi.bps), bool(lo.bps > hi.bps), lo.saturated)


@dataclass
class SessionReport:
    pair_id: tuple[str, str]
    raw_disagreement_pct: float
    pre_reconciliation_pct: float
    post_reconciliation_pct: float
    eve_disagreement_pct: float
    eve_key_disagreement_pct: float
    decode_failure_rate: float
    decode_error_rate: float
    blocks: int
    n_bits: int
    syndrome_bits: int
    bits_per_symbol: int
    mean_ipi_s: float
    key_rate_bps: float
    mir_lower_bps: float
    mir_upper_bps: float
    bounds_crossed: bool
    mir_lower_saturated: bool
    keys_match: bool
    key_bits: int
    key_hex: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        # numpy scalars would not survive json.dumps
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type in ("bool", "int", "float", "str"):
                setattr(self, f.name, {"bool": bool, "int": int, "float": float, "str": str}[f.type](v))
        for name in (
            "raw_disagreement_pct",
            "pre_reconciliation_pct",
            "post_reconciliation_pct",
            "eve_disagreement_pct",
            "eve_key_disagreement_pct",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name}={v} outside [0, 100]")
        if self.key_rate_bps < 0:
            raise ValueError("key rate must be non-negative")

    def to_json(self) -> dict:
        d = asdict(self)
        d["pair_id"] = list(self.pair_id)
        return d

    def flat(self) -> dict:
        """One CSV row: pair split into two columns, ``extra`` inlined."""
        d = self.to_json()
        alice, bob = d.pop("pair_id")
        extra = d.pop("extra")
        d.pop("key_hex")
        return {"alice_lead": alice, "bob_lead": bob, **d, **extra}
