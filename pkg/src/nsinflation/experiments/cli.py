"""Command-line entry point: ``nsinflation <experiment> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..field_rep import MEMORY_CAP_ENV
from .config import EXPERIMENTS, ConfigError, load_config
from .runner import emit_plots, run, write_outputs

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsinflation",
        description="Norm-inflation experiments for the heat-conducting compressible "
                    "Navier-Stokes system: data family, norms, model term, expansion "
                    "bounds and N sweeps.",
        epilog=f"Environment: {MEMORY_CAP_ENV}=<bytes> overrides the dense-grid memory cap.")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    helps = {
        "frame-check": "partition-of-unity and dilation checks of the dyadic frame",
        "data": "build the data family and its critical Besov norm",
        "norms": "Lebesgue, Besov and modulation norms of the data",
        "theta2": "main term, low-frequency size and cross terms of the model temperature",
        "picard": "order-by-order expansion, fitted bound constants and net lower bound",
        "sweep": "all per-N quantities in one CSV",
        "bounds": "cross-term decay slopes and the combinatorial maximum",
    }
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", metavar="PATH", help="key = value config file")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1, metavar="INT",
                       help="FFT worker threads (results do not depend on it)")
        p.add_argument("--uncertified", action="store_true",
                       help="allow delta >= 1/2 outside the certified regime")
        p.add_argument("--dump-fields", action="store_true",
                       help="write fields in the grid binary format under OUT/fields")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, experiment=args.experiment, out=args.out)
    except (ConfigError, OSError) as exc:
        code = "invalid_config" if isinstance(exc, ConfigError) else "unreadable_config"
        print(json.dumps({"ok": False, "errors": [{"code": code, "message": str(exc)}]}),
              file=sys.stderr)
        return 2
    if args.threads < 1:
        print(json.dumps({"ok": False, "errors": [{"code": "invalid_config",
                                                    "field": "threads",
                                                    "message": "threads: must be >= 1"}]}),
              file=sys.stderr)
        return 2
    out = Path(cfg.out)
    dump = out / "fields" if args.dump_fields else None
    result = run(cfg, uncertified=args.uncertified, threads=args.threads, dump_fields=dump)
    try:
        files = write_outputs(result, out)
        if result.ok:
            files += emit_plots(result, out / "plots") if any(
                "N" in r for r in result.records) else []
    except OSError as exc:
        print(json.dumps({"ok": False, "errors": [{"code": "unwritable_output",
                                                    "message": str(exc)}]}), file=sys.stderr)
        return 2
    status = "ok" if result.ok else "FAILED"
    print(f"{cfg.experiment}: {status}; {len(result.records)} record(s); "
          f"{result.timings['total_seconds']:.1f} s; outputs in {out}")
    for name, passed in result.checks.items():
        print(f"  check {name}: {'pass' if passed else 'FAIL'}")
    for err in result.errors:
        print(f"  error [{err['code']}]: {err['message']}")
    return result.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
