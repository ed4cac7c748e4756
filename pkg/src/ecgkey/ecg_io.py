"""Multi-lead ECG records: CSV + JSON sidecar I/O, lead selection, synthesis.

CSV layout: UTF-8, comma separated, a header row of lead names, then one
row per sample with one value (mV) per lead.  The sidecar JSON carries
``fs_hz``, ``resolution_bits``, ``gain_mv`` and ``subject_id``.

PhysioNet records (PTB, MIT-BIH) can be converted with the ``wfdb``
package, e.g.::

    rec = wfdb.rdrecord(name); pandas.DataFrame(rec.p_signal, columns=rec.sig_name).to_csv(out, index=False)
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DuplicateLeadError,
    InvalidBeatTimesError,
    MalformedSampleError,
    MissingMetadataError,
    RaggedRowsError,
    UnknownLeadError,
)

SIDECAR_FIELDS = ("fs_hz", "resolution_bits", "gain_mv", "subject_id")


@dataclass(frozen=True)
class EcgRecord:
    subject_id: str
    lead_names: tuple[str, ...]
    fs_hz: float
    gain_mv: float
    resolution_bits: int
    samples: np.ndarray

    def __post_init__(self):
        if not self.fs_hz > 0:
            raise MissingMetadataError("fs_hz must be positive")
        if self.resolution_bits <= 0:
            raise MissingMetadataError("resolution_bits must be positive")
        if len(set(self.lead_names)) != len(self.lead_names):
            raise DuplicateLeadError(f"duplicate lead names in {self.lead_names}")
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] != len(self.lead_names):
            raise RaggedRowsError("samples must be (n_samples, n_leads)")
        if s.shape[0] < 2:
            raise RaggedRowsError("a record needs at least 2 samples")
        if not np.all(np.isfinite(s)):
            raise MalformedSampleError("samples contain NaN or Inf")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs_hz


@dataclass(frozen=True)
class Signal:
    values: np.ndarray
    fs_hz: float
    lead_name: str
    subject_id: str

    def __post_init__(self):
        if len(self.values) < 2:
            raise ValueError("a signal needs at least 2 samples")
        if not self.fs_hz > 0:
            raise ValueError("fs_hz must be positive")


def _read_sidecar(meta_path) -> dict:
    meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    fs = meta.get("fs_hz")
    if not isinstance(fs, (int, float)) or isinstance(fs, bool) or not fs > 0:
        raise MissingMetadataError(f"sidecar {meta_path} lacks a positive fs_hz")
    for key in ("resolution_bits", "gain_mv", "subject_id"):
        if key not in meta:
            raise MissingMetadataError(f"sidecar {meta_path} lacks {key}")
    return meta


def load_record(path, meta_path) -> EcgRecord:
    meta = _read_sidecar(meta_path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise RaggedRowsError(f"{path} is empty") from None
        if len(set(header)) != len(header):
            raise DuplicateLeadError(f"duplicate lead names in {path}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise RaggedRowsError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise MalformedSampleError(f"{path}:{lineno}: non-numeric sample") from None
            if not all(math.isfinite(v) for v in vals):
                raise MalformedSampleError(f"{path}:{lineno}: NaN or Inf sample")
            rows.append(vals)
    return EcgRecord(
        subject_id=str(meta["subject_id"]),
        lead_names=tuple(header),
        fs_hz=float(meta["fs_hz"]),
        gain_mv=float(meta["gain_mv"]),
        resolution_bits=int(meta["resolution_bits"]),
        samples=np.array(rows, dtype=float).reshape(len(rows), len(header)),
    )


def save_record(record: EcgRecord, path, meta_path) -> None:
    """Write ``record`` in the layout :func:`load_record` reads."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(record.lead_names)
        for row in record.samples:
            writer.writerow([repr(float(v)) for v in row])
    meta = {
        "fs_hz": record.fs_hz,
        "resolution_bits": record.resolution_bits,
        "gain_mv": record.gain_mv,
        "subject_id": record.subject_id,
    }
    Path(meta_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def select_lead(record: EcgRecord, name: str) -> Signal:
    try:
        col = record.lead_names.index(name)
    except ValueError:
        raise UnknownLeadError(f"lead {name!r} not in {record.lead_names}") from None
    return Signal(record.samples[:, col].copy(), record.fs_hz, name, record.subject_id)


# R-wave template: Gaussian bump, ~20 ms wide at the base.
_PULSE_SIGMA_S = 0.005
_MIN_GAP_S = 0.25


def synthesize_ecg(
    beat_times_s: Sequence[float],
    fs_hz: float = 1000.0,
    noise_std_mv: float = 0.0,
    jitter_std_s: float = 0.0,
    seed: int = 0,
    lead_names: Sequence[str] = ("I", "II"),
    tail_s: float = 1.0,
) -> EcgRecord:
    """Pulse-train ECG, one lead per name, with independent per-lead jitter and noise."""
    beats = np.asarray(beat_times_s, dtype=float)
    if beats.ndim != 1 or beats.size == 0:
        raise InvalidBeatTimesError("need a non-empty vector of beat times")
    if np.any(np.diff(beats) <= _MIN_GAP_S):
        raise InvalidBeatTimesError(f"beats must be increasing with gaps > {_MIN_GAP_S} s")
    if fs_hz < 100:
        raise InvalidBeatTimesError("fs_hz must be at least 100")
    rng = np.random.default_rng(seed)
    n = int(np.ceil((beats[-1] + tail_s) * fs_hz))
    t = np.arange(n) / fs_hz
    leads = []
    half = 6 * _PULSE_SIGMA_S
    for _ in lead_names:
        centers = beats + rng.normal(0.0, jitter_std_s, size=beats.size) if jitter_std_s > 0 else beats
        lead = np.zeros(n)
        for c in centers:
            lo = max(0, int((c - half) * fs_hz))
            hi = min(n, int((c + half) * fs_hz) + 2)
            lead[lo:hi] += np.exp(-0.5 * ((t[lo:hi] - c) / _PULSE_SIGMA_S) ** 2)
        if noise_std_mv > 0:
            lead += rng.normal(0.0, noise_std_mv, size=n)
        leads.append(lead)
    return EcgRecord(
        subject_id=f"synthetic-{seed}",
        lead_names=tuple(lead_names),
        fs_hz=float(fs_hz),
        gain_mv=32.768,
        resolution_bits=16,
        samples=np.column_stack(leads),
    )
