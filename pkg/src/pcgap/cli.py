"""Command-line interface.

Subcommands map one-to-one onto sweep tiers plus `report`.  Exit codes:
0 success, 2 partial failure (some tasks failed), 3 invalid configuration.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, harness
from .errors import PcgapError

_SUBCOMMAND_TIER = {
    "verify": "verify",
    "grid": "linear_grid",
    "nn-sweep": "nn_sweep",
    "highdim": "highdim",
    "ib": "ib",
    "bifurcation": "bifurcation",
    "duffing": "duffing",
}


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=str, default=None,
                     help="JSON sweep-config file; CLI flags override fields")
    sub.add_argument("--scale", choices=("desk", "full"), default=None,
                     help="desk (default) or full-scale grids")
    sub.add_argument("--seeds", type=str, default=None,
                     help="comma-separated seed list, e.g. 0,1,2")
    sub.add_argument("--jobs", type=int, default=None,
                     help="worker parallelism (default 1)")
    sub.add_argument("--out", type=str, default=None,
                     help="output directory (default ./results)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcgap",
        description="Numerical laboratory for the predictive-causal gap.")
    parser.add_argument("--version", action="version",
                        version=f"pcgap {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_TIER:
        sub = subs.add_parser(name, help=f"run the {_SUBCOMMAND_TIER[name]} tier")
        _add_common_flags(sub)
    rep = subs.add_parser("report", help="recompute aggregates from raw records")
    rep.add_argument("results_dir", type=str, help="directory with records_*.jsonl")
    rep.add_argument("--json", action="store_true", dest="as_json",
                     help="print the JSON report instead of the text table")
    return parser


def _build_config(args: argparse.Namespace) -> harness.SweepConfig:
    tier = _SUBCOMMAND_TIER[args.command]
    if args.config:
        cfg = harness.SweepConfig.from_json(Path(args.config).read_text())
        if cfg.tier != tier:
            raise ValueError(f"config tier {cfg.tier!r} does not match "
                             f"subcommand {args.command!r}")
        overrides = {}
        if args.scale:
            overrides["scale"] = args.scale
        if args.seeds:
            overrides["seeds"] = tuple(int(s) for s in args.seeds.split(","))
        if args.jobs:
            overrides["parallelism"] = args.jobs
        if args.out:
            overrides["output_dir"] = args.out
        if overrides:
            base = json.loads(cfg.to_json())
            base.update(overrides)
            cfg = harness.SweepConfig.from_json(json.dumps(base))
        return cfg
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else None
    return harness.default_config(tier=tier, scale=args.scale or "desk",
                                  output_dir=args.out or "results",
                                  seeds=seeds, parallelism=args.jobs or 1)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        try:
            rep = harness.report(args.results_dir)
        except (PcgapError, FileNotFoundError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        if args.as_json:
            print(json.dumps(rep["json"], indent=2, default=float))
        else:
            print(rep["text"])
        return 0

    try:
        cfg = _build_config(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 3
    try:
        outcome = harness.run_sweep(cfg)
    except PcgapError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 3
    print(f"pcgap {__version__} config={cfg.config_hash()}")
    print(f"tier {cfg.tier}: {outcome.n_ok} ok, {outcome.n_failed} failed, "
          f"{outcome.n_skipped} skipped (already done)")
    print(f"records: {outcome.records_jsonl}")
    print(f"summary: {outcome.summary_json}")
    return 2 if outcome.n_failed else 0


if __name__ == "__main__":
    sys.exit(main())
