"""R-peak detection and inter-pulse interval (IPI) extraction.

The detector follows the Pan-Tompkins chain: 5-15 Hz band-pass,
derivative, squaring, 150 ms moving-window integration, then adaptive
signal/noise thresholds with a 200 ms refractory period and search-back
for missed beats.  Each detection is finally moved to the largest
band-passed deflection within the integration window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .ecg_io import Signal
from .errors import (
    EmptyAfterFilteringError,
    NoPeaksFoundError,
    TooFewPeaksError,
    TooShortError,
)

IPI_WINDOW_MS = (250.0, 2500.0)


@dataclass(frozen=True)
class IpiSequence:
    """Detected peaks and the IPIs that passed the physiological window.

    ``kept[i]`` is the index of the peak where ``ipis_ms[i]`` starts, so
    ``ipis_ms[i] == (peak_indices[kept[i] + 1] - peak_indices[kept[i]]) / fs_hz * 1000``.
    """

    peak_indices: np.ndarray
    ipis_ms: np.ndarray
    fs_hz: float
    kept: np.ndarray
    n_dropped: int = 0

    @property
    def mean_ipi_s(self) -> float:
        return float(np.mean(self.ipis_ms)) / 1000.0

    def __len__(self) -> int:
        return len(self.ipis_ms)


@dataclass(frozen=True)
class PairedIpis:
    x_ms: np.ndarray
    y_ms: np.ndarray
    n_dropped: int = 0
    truncated: int = field(default=0)

    def __post_init__(self):
        if len(self.x_ms) != len(self.y_ms) or len(self.x_ms) < 1:
            raise EmptyAfterFilteringError("paired sequences must be equal-length and non-empty")

    def __len__(self) -> int:
        return len(self.x_ms)


def _bandpass(x: np.ndarray, fs: float, band: tuple[float, float]) -> np.ndarray:
    sos = sps.butter(2, band, btype="bandpass", fs=fs, output="sos")
    return sps.sosfiltfilt(sos, x)


def detect_r_peaks(
    signal: Signal,
    band_hz: tuple[float, float] = (5.0, 15.0),
    integration_ms: float = 150.0,
    refractory_ms: float = 200.0,
) -> np.ndarray:
    """Sample indices of R peaks, strictly increasing and >= refractory apart."""
    x = np.asarray(signal.values, dtype=float)
    fs = signal.fs_hz
    if x.size < 2 * fs:
        raise TooShortError(f"need at least 2 s of signal, got {x.size / fs:.2f} s")
    filtered = _bandpass(x - x.mean(), fs, band_hz)
    slope = np.gradient(filtered) * fs
    energy = slope * slope
    width = max(1, int(round(integration_ms * fs / 1000.0)))
    mwi = np.convolve(energy, np.ones(width) / width, mode="same")
    refractory = max(1, int(round(refractory_ms * fs / 1000.0)))

    cands, _ = sps.find_peaks(mwi, distance=refractory)
    cands = cands[mwi[cands] > 0]
    if cands.size < 2:
        raise NoPeaksFoundError("fewer than two candidate QRS complexes")

    learn = mwi[: int(2 * fs)]
    spk = 0.25 * float(learn.max())
    npk = 0.5 * float(learn.mean())
    thr1 = npk + 0.25 * (spk - npk)
    accepted: list[int] = []
    for pos, c in enumerate(cands):
        v = float(mwi[c])
        if len(accepted) >= 2:
            rr = np.diff(accepted[-9:]).mean()
            if c - accepted[-1] > 1.66 * rr:
                # Search back for a beat missed since the last detection.
                thr2 = 0.5 * thr1
                between = cands[:pos]
                between = between[(between > accepted[-1] + refractory) & (between < c - refractory)]
                between = between[mwi[between] > thr2]
                if between.size:
                    best = int(between[np.argmax(mwi[between])])
                    accepted.append(best)
                    spk = 0.25 * float(mwi[best]) + 0.75 * spk
        if v > thr1 and (not accepted or c - accepted[-1] >= refractory):
            accepted.append(int(c))
            spk = 0.125 * v + 0.875 * spk
        else:
            npk = 0.125 * v + 0.875 * npk
        thr1 = npk + 0.25 * (spk - npk)

    if len(accepted) < 2:
        raise NoPeaksFoundError("fewer than two R peaks passed the adaptive threshold")

    half = width // 2
    mag = np.abs(filtered)
    peaks = []
    for c in accepted:
        lo, hi = max(0, c - half), min(x.size, c + half + 1)
        p = lo + int(np.argmax(mag[lo:hi]))
        if not peaks or p - peaks[-1] >= refractory:
            peaks.append(p)
    if len(peaks) < 2:
        raise NoPeaksFoundError("fewer than two R peaks after refinement")
    return np.asarray(peaks, dtype=np.int64)


def extract_ipis(peaks, fs_hz: float, window_ms: tuple[float, float] = IPI_WINDOW_MS) -> IpiSequence:
    """Consecutive peak differences in ms, dropping those outside ``window_ms``."""
    p = np.asarray(peaks, dtype=np.int64)
    if p.size < 2:
        raise TooFewPeaksError("need at least two peaks")
    if np.any(np.diff(p) <= 0):
        raise TooFewPeaksError("peaks must be strictly increasing")
    ipis = np.diff(p) / fs_hz * 1000.0
    ok = (ipis >= window_ms[0]) & (ipis <= window_ms[1])
    if not ok.any():
        raise TooFewPeaksError("no inter-peak interval falls inside the physiological window")
    return IpiSequence(p, ipis[ok], float(fs_hz), np.flatnonzero(ok), int((~ok).sum()))


def pair_ipis(a: IpiSequence, b: IpiSequence, outlier_ms: float | None = None) -> PairedIpis:
    """Pair IPIs by index after truncating to the shorter sequence."""
    xa = np.asarray(a.ipis_ms if hasattr(a, "ipis_ms") else a, dtype=float)
    yb = np.asarray(b.ipis_ms if hasattr(b, "ipis_ms") else b, dtype=float)
    if xa.size == 0 or yb.size == 0:
        raise EmptyAfterFilteringError("both sequences must be non-empty")
    n = min(xa.size, yb.size)
    x, y = xa[:n], yb[:n]
    dropped = 0
    if outlier_ms is not None:
        keep = np.abs(x - y) <= outlier_ms
        dropped = int((~keep).sum())
        x, y = x[keep], y[keep]
    if x.size == 0:
        raise EmptyAfterFilteringError("no IPI pair survived outlier rejection")
    return PairedIpis(x, y, dropped, max(xa.size, yb.size) - n)


def save_ipis_csv(ipis_ms, path) -> None:
    Path(path).write_text("".join(f"{float(v)!r}\n" for v in ipis_ms), encoding="utf-8")


def load_ipis_csv(path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").split()
    return np.array([float(v) for v in lines], dtype=float)


def signal_ipis(signal: Signal, **detector_kw) -> IpiSequence:
    return extract_ipis(detect_r_peaks(signal, **detector_kw), signal.fs_hz)
