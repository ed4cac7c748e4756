"""Command line entry point: ``ecgkey {keygen,simulate,sweep,replay,quantize-design}``.

Exit codes: 0 keys match, 2 key mismatch, 3 configuration error,
4 decode failures above ``--max-failure-rate``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import ecg_io, ipi, pipeline, quantizer
from .errors import ConfigError, EcgKeyError
from .gf2 import int_to_bits
from .pipeline import PipelineConfig

EXIT_OK = 0
EXIT_MISMATCH = 2
EXIT_CONFIG = 3
EXIT_FAILURES = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _w_max(text: str) -> int | None:
    return None if text.lower() in ("none", "inf") else int(text)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON config; explicit flags override its fields")
    p.add_argument("--record", default=S, help="ECG CSV (header = lead names, values in mV)")
    p.add_argument("--meta", default=S, help="JSON sidecar with fs_hz, resolution_bits, gain_mv, subject_id")
    p.add_argument("--alice-lead", dest="alice_lead", default=S)
    p.add_argument("--bob-lead", dest="bob_lead", default=S)
    p.add_argument("--b", type=int, default=S, help="quantization bits per IPI (default 4)")
    p.add_argument("--n", "--n-bits", dest="n", type=int, default=S, help="block length N (default 160)")
    p.add_argument("--m", "--syndrome-bits", dest="m", type=int, default=S, help="syndrome length M (default 142)")
    p.add_argument("--w-max", dest="w_max", type=_w_max, default=S, help="decoder distance cap, or 'none'")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--bit-mapping", dest="bit_mapping", choices=quantizer.MAPPINGS, default=S)
    p.add_argument("--quantizer", default=S, help="optimize | uniform | path to a quantizer JSON")
    p.add_argument("--bounds-bins", dest="bounds_bins", type=int, default=S)
    p.add_argument("--outlier-ms", dest="outlier_ms", type=float, default=S)
    p.add_argument("--grid-resolution-ms", dest="grid_resolution_ms", type=float, default=S)
    p.add_argument("--max-failure-rate", dest="max_failure_rate", type=float, default=S)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--model", choices=pipeline.MODELS, default=S)
    p.add_argument("--rho", type=float, default=S)
    p.add_argument("--p", type=float, default=S)
    p.add_argument("--blocks", type=int, default=S)
    p.add_argument("--mean-ipi-s", dest="mean_ipi_s", type=float, default=S)
    p.add_argument("--ipi-std-ms", dest="ipi_std_ms", type=float, default=S)


_CONFIG_FIELDS = {f for f in PipelineConfig.__dataclass_fields__}


def _config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_FIELDS}
    return cfg.replace(**overrides).validate()


def exit_code(report, max_failure_rate: float) -> int:
    """Mismatch outranks an excessive failure rate."""
    if not report.keys_match:
        return EXIT_MISMATCH
    if report.decode_failure_rate > max_failure_rate:
        return EXIT_FAILURES
    return EXIT_OK


def _finish(cfg: PipelineConfig, obs, out: str) -> int:
    result = pipeline.run_session(cfg, obs)
    pipeline.write_session(result, obs, out)
    print(json.dumps(result.report.to_json(), indent=2, sort_keys=True))
    return exit_code(result.report, cfg.max_failure_rate)


def cmd_keygen(args) -> int:
    cfg = _config(args)
    obs = pipeline.observations_from_record(cfg)
    return _finish(cfg, obs, args.out)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    obs = pipeline.simulate_observations(cfg)
    return _finish(cfg, obs, args.out)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    leads = args.leads or []
    rows = pipeline.sweep(cfg, leads, args.m_values)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    pipeline.write_sweep_csv(rows, args.out)
    best = {}
    for r in rows:
        best[f"{r['alice_lead']}-{r['bob_lead']}"] = r["zero_failure_min_m"]
    print(json.dumps({"rows": len(rows), "zero_failure_min_m": best}, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_replay(args) -> int:
    out = Path(args.dir) if args.dir else None

    def pick(explicit, name):
        if explicit:
            return Path(explicit)
        if out is None:
            raise ConfigError(f"need --{name.replace('_', '-')} or --dir")
        return out / {"transcript": "transcript.json", "bob_bits": "bob_bits.hex",
                      "bob_key": "key_bob.hex", "eve_key": "key_eve.hex"}[name]

    try:
        transcript = json.loads(pick(args.transcript, "transcript").read_text())
        bob = pipeline.parse_key(pick(args.bob_bits, "bob_bits").read_text())
        bob_key_text = pick(args.bob_key, "bob_key").read_text()
    except OSError as err:
        raise ConfigError(str(err)) from err
    bob_key = pipeline.bob_key_from_transcript(transcript, int_to_bits(bob.value, bob.length))
    recomputed = pipeline.format_key(bob_key)
    summary = {"bob_key_bits": bob_key.length, "bob_key_identical": recomputed == bob_key_text}
    eve_path = Path(args.eve_key) if args.eve_key else (out / "key_eve.hex" if out else None)
    if eve_path is not None and eve_path.exists():
        eve_key = pipeline.eve_key_from_transcript(transcript)
        summary["eve_key_identical"] = pipeline.format_key(eve_key) == eve_path.read_text()
    print(json.dumps(summary, indent=2, sort_keys=True))
    ok = summary["bob_key_identical"] and summary.get("eve_key_identical", True)
    return EXIT_OK if ok else EXIT_MISMATCH


def cmd_quantize_design(args) -> int:
    cfg = _config(args)
    if args.x_ipis and args.y_ipis:
        pairs = ipi.pair_ipis(ipi.load_ipis_csv(args.x_ipis), ipi.load_ipis_csv(args.y_ipis), cfg.outlier_ms)
        x, y = pairs.x_ms, pairs.y_ms
    else:
        if not (cfg.record and cfg.meta):
            raise ConfigError("quantize-design needs --record/--meta or --x-ipis/--y-ipis")
        rec = ecg_io.load_record(cfg.record, cfg.meta)
        a = pipeline.lead_ipis(rec, cfg.alice_lead)
        b = pipeline.lead_ipis(rec, cfg.bob_lead)
        pairs = ipi.pair_ipis(a, b, cfg.outlier_ms)
        x, y = pairs.x_ms, pairs.y_ms
    hist = quantizer.build_joint_histogram((x, y), cfg.grid_resolution_ms)
    if cfg.quantizer == "uniform":
        stages = [quantizer.uniform_spec(x, y, k, cfg.bit_mapping) for k in range(1, cfg.b + 1)]
    else:
        stages = quantizer.design_stages(hist, cfg.b, mapping=cfg.bit_mapping)
    spec = stages[-1]
    spec.save(args.out)
    summary = {
        "pairs": int(len(x)),
        "stages": [
            {**s.to_json(), "objective_bits": quantizer.coincidence_objective(hist, s.tau_x, s.tau_y)}
            for s in stages
        ],
    }
    if args.stages:
        Path(args.stages).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"out": args.out, "objective_bits": summary["stages"][-1]["objective_bits"]}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ecgkey", description="ECG inter-pulse-interval secret key agreement")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", help="run the protocol on one lead pair of an ECG record")
    _add_config_flags(p)
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("simulate", help="run the protocol on a synthetic correlated source")
    _add_config_flags(p)
    _add_model_flags(p)
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="all lead pairs x syndrome lengths, one CSV row each")
    _add_config_flags(p)
    p.add_argument("--leads", type=_str_list, required=True, help="comma-separated lead names")
    p.add_argument("--m-values", dest="m_values", type=_int_list, required=True, help="comma-separated M values")
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="recompute Bob's and Eve's keys from the public transcript")
    p.add_argument("--dir", help="keygen/simulate output directory")
    p.add_argument("--transcript")
    p.add_argument("--bob-bits", dest="bob_bits")
    p.add_argument("--bob-key", dest="bob_key")
    p.add_argument("--eve-key", dest="eve_key")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("quantize-design", help="design and save a quantizer")
    _add_config_flags(p)
    p.add_argument("--x-ipis", dest="x_ipis", help="Alice IPIs, one value (ms) per line")
    p.add_argument("--y-ipis", dest="y_ipis", help="Bob IPIs, one value (ms) per line")
    p.add_argument("--out", default="quantizer.json")
    p.add_argument("--stages", help="also write every recursion stage with its objective")
    p.set_defaults(func=cmd_quantize_design)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except EcgKeyError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
