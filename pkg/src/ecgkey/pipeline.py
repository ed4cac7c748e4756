"""End-to-end key agreement sessions.

A session turns Alice's and Bob's observations into bit streams, splits
them into ``N``-bit blocks, publishes one syndrome per block, lets Bob
(and Eve, from the transcript alone) decode, and distils the key from
every block Bob managed to decode.  Blocks Bob cannot decode are announced
and dropped from both keys.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ecg_io, ipi, metrics, quantizer
from .errors import (
    ConfigError,
    DecodeFailureError,
    EcgKeyError,
    InvalidModelParamsError,
)
from .gf2 import BitBlock, Gf2Matrix, bits_to_int, random_full_rank
from .privacy import AmplifierSpec, extract_key, make_privacy_matrix
from .reconcile import decode, eve_decode, syndrome

log = logging.getLogger(__name__)

MODELS = ("gaussian", "symbol-flip", "bit-flip")


class StageError(EcgKeyError):
    """A module error annotated with the pipeline stage and block index."""

    def __init__(self, stage: str, err: Exception, block: int | None = None):
        self.stage = stage
        self.block = block
        self.cause = err
        where = stage if block is None else f"{stage} (block {block})"
        super().__init__(f"{where}: {type(err).__name__}: {err}")


@dataclass
class PipelineConfig:
    record: str | None = None
    meta: str | None = None
    alice_lead: str = "I"
    bob_lead: str = "II"
    b: int = 4
    n: int = 160
    m: int = 142
    w_max: int | None = 4
    seed: int = 0
    bit_mapping: str = "gray"
    quantizer: str = "optimize"
    bounds_bins: int = 16
    outlier_ms: float | None = None
    grid_resolution_ms: float = 1.0
    raw_bits: int = 16
    max_failure_rate: float = 0.01
    # synthetic sources
    model: str = "bit-flip"
    rho: float = 0.99
    p: float = 0.03
    blocks: int = 100
    mean_ipi_s: float = 0.75
    ipi_std_ms: float = 50.0

    def validate(self) -> "PipelineConfig":
        if self.b < 1 or self.b > 8:
            raise ConfigError(f"b must be in 1..8, got {self.b}")
        if not 0 < self.m < self.n:
            raise ConfigError(f"need 0 < M < N, got M={self.m}, N={self.n}")
        if self.n % self.b:
            raise ConfigError(f"N={self.n} must be a multiple of b={self.b}")
        if self.w_max is not None and self.w_max < 0:
            raise ConfigError("w_max must be >= 0")
        if self.bit_mapping not in quantizer.MAPPINGS:
            raise ConfigError(f"bit_mapping must be one of {quantizer.MAPPINGS}")
        if self.bounds_bins < 1:
            raise ConfigError("bounds_bins must be >= 1")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if self.blocks < 1:
            raise ConfigError("blocks must be >= 1")
        if not self.mean_ipi_s > 0:
            raise ConfigError("mean_ipi_s must be positive")
        if not 0.0 <= self.max_failure_rate <= 1.0:
            raise ConfigError("max_failure_rate must lie in [0, 1]")
        return self

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class Observations:
    """What the two legitimate parties hold before reconciliation."""

    pair_id: tuple[str, str]
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    x: np.ndarray
    y: np.ndarray
    mean_ipi_s: float
    raw_alice: np.ndarray | None = None
    raw_bob: np.ndarray | None = None
    spec: quantizer.QuantizerSpec | None = None
    info: dict = field(default_factory=dict)


@dataclass
class SessionResult:
    report: metrics.SessionReport
    alice_key: BitBlock
    bob_key: BitBlock
    eve_key: BitBlock
    transcript: dict


def raw_ipi_bits(ipis_ms: np.ndarray, fs_hz: float, raw_bits: int) -> np.ndarray:
    """IPIs at their native resolution (whole sampling periods) as fixed-width binary."""
    counts = np.clip(np.rint(np.asarray(ipis_ms) * fs_hz / 1000.0).astype(np.int64), 0, (1 << raw_bits) - 1)
    shifts = np.arange(raw_bits - 1, -1, -1)
    return ((counts[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def design_quantizer(cfg: PipelineConfig, x: np.ndarray, y: np.ndarray) -> quantizer.QuantizerSpec:
    if cfg.quantizer == "optimize":
        hist = quantizer.build_joint_histogram((x, y), cfg.grid_resolution_ms)
        return quantizer.optimize_thresholds(hist, cfg.b, mapping=cfg.bit_mapping)
    if cfg.quantizer == "uniform":
        return quantizer.uniform_spec(x, y, cfg.b, cfg.bit_mapping)
    spec = quantizer.QuantizerSpec.load(cfg.quantizer)
    if spec.bits != cfg.b:
        raise ConfigError(f"quantizer file has b={spec.bits}, config asks for b={cfg.b}")
    return spec.with_mapping(cfg.bit_mapping)


def observations_from_ipis(
    cfg: PipelineConfig,
    pairs: ipi.PairedIpis,
    mean_ipi_s: float,
    fs_hz: float,
    pair_id: tuple[str, str],
) -> Observations:
    x, y = np.asarray(pairs.x_ms, dtype=float), np.asarray(pairs.y_ms, dtype=float)
    try:
        spec = design_quantizer(cfg, x, y)
    except EcgKeyError as err:
        raise StageError("quantizer", err) from err
    sx = quantizer.quantize(x, spec.tau_x)
    sy = quantizer.quantize(y, spec.tau_y)
    return Observations(
        pair_id=pair_id,
        alice_bits=quantizer.symbols_to_bits(sx, cfg.b, spec.bit_mapping),
        bob_bits=quantizer.symbols_to_bits(sy, cfg.b, spec.bit_mapping),
        x=x,
        y=y,
        mean_ipi_s=mean_ipi_s,
        raw_alice=raw_ipi_bits(x, fs_hz, cfg.raw_bits),
        raw_bob=raw_ipi_bits(y, fs_hz, cfg.raw_bits),
        spec=spec,
        info={"ipi_pairs": len(x), "ipi_outliers_dropped": pairs.n_dropped},
    )


def lead_ipis(record: ecg_io.EcgRecord, lead: str) -> ipi.IpiSequence:
    try:
        sig = ecg_io.select_lead(record, lead)
    except EcgKeyError as err:
        raise StageError("ecg_io", err) from err
    try:
        return ipi.signal_ipis(sig)
    except EcgKeyError as err:
        raise StageError(f"ipi[{lead}]", err) from err


def observations_from_record(
    cfg: PipelineConfig,
    record: ecg_io.EcgRecord | None = None,
    cache: dict | None = None,
) -> Observations:
    if record is None:
        if not (cfg.record and cfg.meta):
            raise ConfigError("keygen needs --record and --meta")
        try:
            record = ecg_io.load_record(cfg.record, cfg.meta)
        except EcgKeyError as err:
            raise StageError("ecg_io", err) from err
        except OSError as err:
            raise ConfigError(str(err)) from err
    seqs = []
    for lead in (cfg.alice_lead, cfg.bob_lead):
        if cache is not None and lead in cache:
            seqs.append(cache[lead])
            continue
        seq = lead_ipis(record, lead)
        if cache is not None:
            cache[lead] = seq
        seqs.append(seq)
    a, b = seqs
    try:
        pairs = ipi.pair_ipis(a, b, cfg.outlier_ms)
    except EcgKeyError as err:
        raise StageError("ipi", err) from err
    obs = observations_from_ipis(cfg, pairs, a.mean_ipi_s, record.fs_hz, (cfg.alice_lead, cfg.bob_lead))
    obs.info.update(alice_ipis_dropped=a.n_dropped, bob_ipis_dropped=b.n_dropped)
    return obs


def simulate_observations(cfg: PipelineConfig) -> Observations:
    """Synthetic paired sources for desk-scale experiments."""
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    n_bits = cfg.blocks * cfg.n
    n_sym = n_bits // cfg.b
    levels = 1 << cfg.b
    if cfg.model == "gaussian":
        if not -1 < cfg.rho < 1:
            raise InvalidModelParamsError(f"|rho| must be < 1, got {cfg.rho}")
        z = rng.standard_normal((n_sym, 2))
        mean_ms = 1000.0 * cfg.mean_ipi_s
        x = np.rint(mean_ms + cfg.ipi_std_ms * z[:, 0])
        y = np.rint(mean_ms + cfg.ipi_std_ms * (cfg.rho * z[:, 0] + math.sqrt(1 - cfg.rho**2) * z[:, 1]))
        pairs = ipi.PairedIpis(x, y)
        return observations_from_ipis(cfg, pairs, float(x.mean()) / 1000.0, 1000.0, ("gaussian-x", "gaussian-y"))
    if not 0 <= cfg.p < 1:
        raise InvalidModelParamsError(f"p must lie in [0, 1), got {cfg.p}")
    if cfg.model == "bit-flip":
        alice = rng.integers(0, 2, size=n_bits, dtype=np.uint8)
        bob = alice ^ (rng.random(n_bits) < cfg.p).astype(np.uint8)
        sx = quantizer.bits_to_symbols(alice, cfg.b, "natural")
        sy = quantizer.bits_to_symbols(bob, cfg.b, "natural")
    else:
        sx = rng.integers(1, levels + 1, size=n_sym)
        flip = rng.random(n_sym) < cfg.p
        step = np.where(rng.random(n_sym) < 0.5, -1, 1)
        sy = sx + flip * step
        sy = np.where(sy < 1, 2, np.where(sy > levels, levels - 1, sy))
        alice = quantizer.symbols_to_bits(sx, cfg.b, cfg.bit_mapping)
        bob = quantizer.symbols_to_bits(sy, cfg.b, cfg.bit_mapping)
    return Observations(
        pair_id=(f"{cfg.model}-alice", f"{cfg.model}-bob"),
        alice_bits=alice,
        bob_bits=bob,
        x=sx.astype(float),
        y=sy.astype(float),
        mean_ipi_s=cfg.mean_ipi_s,
    )


def code_matrices(n: int, m: int, seed: int) -> tuple[Gf2Matrix, AmplifierSpec]:
    h = random_full_rank(m, n, seed)
    return h, make_privacy_matrix(h, seed + 1)


def _blocks(bits: np.ndarray, n: int) -> list[BitBlock]:
    count = bits.size // n
    return [BitBlock(n, bits_to_int(bits[i * n : (i + 1) * n])) for i in range(count)]


def _concat(blocks: Sequence[BitBlock]) -> BitBlock:
    value, length = 0, 0
    for blk in blocks:
        value = (value << blk.length) | blk.value
        length += blk.length
    return BitBlock(length, value)


def _pct(a: BitBlock, b: BitBlock) -> float:
    return 100.0 * metrics.disagreement_rate(a, b) if a.length else 0.0


def bob_key_from_transcript(transcript: dict, bob_bits: np.ndarray) -> BitBlock:
    """Recompute Bob's key from his own bits and the public transcript."""
    h = Gf2Matrix.from_json(transcript["H"])
    amp = AmplifierSpec(Gf2Matrix.from_json(transcript["A"]), h)
    n = transcript["n_bits"]
    m = transcript["syndrome_bits"]
    skip = set(transcript["discarded_blocks"])
    keys = []
    for i, (zhex, blk) in enumerate(zip(transcript["syndromes"], _blocks(np.asarray(bob_bits), n))):
        if i in skip:
            continue
        what = decode(h, BitBlock.from_hex(zhex, m), blk, transcript["w_max"])
        keys.append(extract_key(amp, what))
    return _concat(keys)


def eve_key_from_transcript(transcript: dict) -> BitBlock:
    h = Gf2Matrix.from_json(transcript["H"])
    amp = AmplifierSpec(Gf2Matrix.from_json(transcript["A"]), h)
    m = transcript["syndrome_bits"]
    skip = set(transcript["discarded_blocks"])
    keys = [
        extract_key(amp, eve_decode(h, BitBlock.from_hex(zhex, m)))
        for i, zhex in enumerate(transcript["syndromes"])
        if i not in skip
    ]
    return _concat(keys)


def run_session(cfg: PipelineConfig, obs: Observations, matrices=None) -> SessionResult:
    """Reconcile and amplify ``obs`` block by block; compute every metric."""
    cfg.validate()
    n, m, b = cfg.n, cfg.m, cfg.b
    h, amp = matrices if matrices is not None else code_matrices(n, m, cfg.seed)
    xs = _blocks(obs.alice_bits, n)
    ys = _blocks(obs.bob_bits, n)
    if not xs:
        raise StageError("blocks", ConfigError(f"only {obs.alice_bits.size} bits; one block needs {n}"))

    syndromes, discarded = [], []
    bob_words, eve_words = [], []
    alice_keys, bob_keys, eve_keys = [], [], []
    failures = errors = 0
    for i, (x, y) in enumerate(zip(xs, ys)):
        try:
            z = syndrome(h, x)
            eve_w = eve_decode(h, z)
        except EcgKeyError as err:
            raise StageError("reconcile", err, i) from err
        syndromes.append(z.hex())
        eve_words.append(eve_w)
        try:
            what = decode(h, z, y, cfg.w_max)
        except DecodeFailureError:
            failures += 1
            errors += 1
            discarded.append(i)
            bob_words.append(y)
            continue
        except EcgKeyError as err:
            raise StageError("reconcile", err, i) from err
        errors += what != x
        bob_words.append(what)
        alice_keys.append(extract_key(amp, x))
        bob_keys.append(extract_key(amp, what))
        eve_keys.append(extract_key(amp, eve_w))

    used = len(xs) * n
    alice_all = _concat(xs)
    alice_key, bob_key, eve_key = _concat(alice_keys), _concat(bob_keys), _concat(eve_keys)
    if obs.raw_alice is not None:
        raw_pct = 100.0 * metrics.disagreement_rate(obs.raw_alice, obs.raw_bob)
    else:
        raw_pct = 100.0 * metrics.disagreement_rate(obs.alice_bits[:used], obs.bob_bits[:used])

    bounds = metrics.secret_key_capacity_bounds(obs.x, obs.y, obs.mean_ipi_s, cfg.bounds_bins)
    report = metrics.SessionReport(
        pair_id=obs.pair_id,
        raw_disagreement_pct=raw_pct,
        pre_reconciliation_pct=metrics.per_symbol_disagreement_pct(obs.alice_bits[:used], obs.bob_bits[:used], b),
        post_reconciliation_pct=metrics.per_symbol_disagreement_pct(alice_all, _concat(bob_words), b),
        eve_disagreement_pct=metrics.per_symbol_disagreement_pct(alice_all, _concat(eve_words), b),
        eve_key_disagreement_pct=_pct(alice_key, eve_key),
        decode_failure_rate=failures / len(xs),
        decode_error_rate=errors / len(xs),
        blocks=len(xs),
        n_bits=n,
        syndrome_bits=m,
        bits_per_symbol=b,
        mean_ipi_s=obs.mean_ipi_s,
        key_rate_bps=metrics.key_rate(n, m, b, obs.mean_ipi_s),
        mir_lower_bps=bounds.lower,
        mir_upper_bps=bounds.upper,
        bounds_crossed=bounds.crossed,
        mir_lower_saturated=bounds.lower_saturated,
        keys_match=alice_key == bob_key,
        key_bits=alice_key.length,
        key_hex=alice_key.hex(),
        extra=dict(obs.info),
    )
    transcript = {
        "n_bits": n,
        "syndrome_bits": m,
        "bits_per_symbol": b,
        "bit_mapping": cfg.bit_mapping,
        "w_max": cfg.w_max,
        "seed": cfg.seed,
        "H": h.to_json(),
        "A": amp.a.to_json(),
        "syndromes": syndromes,
        "discarded_blocks": discarded,
        "quantizer": obs.spec.to_json() if obs.spec is not None else None,
    }
    log.info(
        "%s-%s: %d blocks, %d failed, key %d bits, match=%s",
        *obs.pair_id, len(xs), failures, alice_key.length, report.keys_match,
    )
    return SessionResult(report, alice_key, bob_key, eve_key, transcript)


def format_key(key: BitBlock) -> str:
    return f"{key.length}:{key.hex()}\n"


def parse_key(text: str) -> BitBlock:
    length, _, hexpart = text.strip().partition(":")
    return BitBlock.from_hex(hexpart, int(length))


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_session(result: SessionResult, obs: Observations, outdir) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    _dump(result.report.to_json(), out / "report.json")
    _dump(result.transcript, out / "transcript.json")
    (out / "key_alice.hex").write_text(format_key(result.alice_key))
    (out / "key_bob.hex").write_text(format_key(result.bob_key))
    (out / "key_eve.hex").write_text(format_key(result.eve_key))
    # Bob's private observation, kept only so ``replay`` can check the transcript.
    (out / "bob_bits.hex").write_text(format_key(BitBlock(obs.bob_bits.size, bits_to_int(obs.bob_bits))))
    return out


def sweep(
    cfg: PipelineConfig,
    leads: Sequence[str],
    m_values: Sequence[int],
    record: ecg_io.EcgRecord | None = None,
    observe=None,
) -> list[dict]:
    """One row per (lead pair, M) cell, in input order; cell errors are recorded.

    ``observe(cfg)`` overrides how observations are produced for a cell
    (used for synthetic sweeps); by default IPIs come from ``record``.
    """
    if len(leads) < 2:
        raise ConfigError("a sweep needs at least two leads")
    if record is None and observe is None:
        record = ecg_io.load_record(cfg.record, cfg.meta)
    cache: dict = {}
    rows = []
    for alice, bob in itertools.combinations(leads, 2):
        pair_cfg = cfg.replace(alice_lead=alice, bob_lead=bob)
        pair_rows = []
        try:
            obs = observe(pair_cfg) if observe else observations_from_record(pair_cfg, record, cache)
            pair_err = None
        except EcgKeyError as err:
            obs, pair_err = None, err
        for m in m_values:
            row = {"alice_lead": alice, "bob_lead": bob, "m": m, "error": ""}
            if pair_err is not None:
                row["error"] = str(pair_err)
            else:
                try:
                    res = run_session(pair_cfg.replace(m=m), obs)
                    row.update(res.report.flat())
                    row["m"] = m
                except EcgKeyError as err:
                    row["error"] = str(err)
            pair_rows.append(row)
        clean = [r["m"] for r in pair_rows if not r["error"] and r["decode_error_rate"] == 0]
        best = min(clean) if clean else ""
        for r in pair_rows:
            r["zero_failure_min_m"] = best
        rows.extend(pair_rows)
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    fields: list[str] = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
