"""Command-line entry point: ``vecsens <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments
from .config import ConfigError, apply_overrides, defaults_for, load_config

COMMANDS = ("spectrum", "rmse", "compare-estimators", "compare-geometry", "crb", "ambiguity", "complexity")

# flag -> config key
_FLAG_KEYS = {
    "seed": "seed",
    "grid_step_doa": "grid_step_doa",
    "grid_step_pol": "grid_step_pol",
    "trials": "trials",
    "snapshots": "snapshots",
    "method": "methods",
    "workers": "workers",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vecsens", description="Vector-sensor array DOA and polarisation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--out", help="output CSV (or JSON for ambiguity); a .json sidecar is written next to CSVs")
        if name == "complexity":
            p.add_argument("--n", type=int, default=4, help="sensors N")
            p.add_argument("--m", type=int, default=2, help="sources M")
            p.add_argument("--l", type=int, default=181, help="grid points per axis L")
            continue
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--grid-step-doa", type=float)
        p.add_argument("--grid-step-pol", type=float)
        p.add_argument("--trials", type=int)
        p.add_argument("--snapshots", type=int)
        p.add_argument("--method", help="comma-separated: det, eig, music4d")
        p.add_argument("--workers", type=int, help="worker processes for Monte-Carlo trials")
    return parser


def resolve_config(args):
    config = defaults_for(args.command)
    if args.config:
        config = load_config(args.config, config)
    flags = {key: str(getattr(args, flag)) for flag, key in _FLAG_KEYS.items() if getattr(args, flag) is not None}
    return apply_overrides(config, flags).validate()


def _run(args) -> list[Path]:
    out = Path(args.out) if args.out else None
    if args.command == "complexity":
        return experiments.write_table(out or "complexity.csv", experiments.complexity_table(args.n, args.m, args.l))
    config = resolve_config(args)
    default_out = Path(f"{args.command}.{'json' if args.command == 'ambiguity' else 'csv'}")
    out = out or default_out
    if args.command == "spectrum":
        spec, meta = experiments.run_spectrum_export(config)
        table = experiments.spectrum_table(spec)
        table.meta = meta
        return experiments.write_table(out, table)
    if args.command == "ambiguity":
        return [experiments.write_json(out, experiments.run_ambiguity_report(config))]
    runners = {
        "rmse": experiments.run_rmse_sweep,
        "compare-estimators": experiments.run_estimator_comparison,
        "compare-geometry": experiments.run_geometry_comparison,
        "crb": experiments.run_crb_table,
    }
    return experiments.write_table(out, runners[args.command](config))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        for path in _run(args):
            print(path)
    except (ConfigError, ValueError, TypeError, OSError, ArithmeticError) as exc:
        print(f"vecsens {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
