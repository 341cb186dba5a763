"""Command line entry point: one verb per pipeline stage, plus ``all``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .scenario import ConfigError, emit_report, parse_config, run_scenario

VERBS = {
    "verify-gassmann": ["gassmann"],
    "build-graph": ["build"],
    "transplant": ["transplant"],
    "spectrum": ["spectrum"],
    "qc": ["qc"],
    "perturb": ["perturb"],
    "all": None,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isospec", description="Sunada-type isospectral surface toolkit.")
    p.add_argument("verb", choices=list(VERBS))
    p.add_argument("--config", type=Path, help="JSON scenario file (defaults are used when omitted)")
    p.add_argument("--out", type=Path, help="output directory for report.json and CSV spectra")
    p.add_argument("--cutoff", type=float, help="spectrum cutoff L")
    p.add_argument("--budget", type=int, help="crossing budget B for walk types")
    p.add_argument("--tolerance", type=float, help="absolute bucketing tolerance")
    p.add_argument("--no-cache", action="store_true", help="recompute every stage")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else ""
        cfg = parse_config(text).with_overrides(cutoff=args.cutoff, budget=args.budget, tolerance=args.tolerance)
    except (OSError, ValueError, ConfigError) as exc:
        print(f"isospec: {exc}", file=sys.stderr)
        return 2
    out = args.out or Path(cfg["output"]["dir"])
    cache = None if args.no_cache else cfg["output"]["cache"]
    report = run_scenario(cfg, cache_dir=cache, stages=VERBS[args.verb])
    emit_report(report, out)
    for name, res in report.stages.items():
        extra = f" ({res.reason})" if res.reason else ""
        print(f"{name:<11} {res.status}{extra}  {report.timings.get(name, 0.0):.2f}s")
    print(f"report written to {out / 'report.json'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
