"""Command-line interface: solve, train, verify, sweep."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import harness
from .scenario import load_config


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="config file path")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", type=Path, default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgecontract",
        description="Contract design experiments: exact solver, diffusion policy, verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, doc in (
        ("solve", "exhaustive monotone grid search for the optimal menu"),
        ("train", "train the diffusion contract policy"),
        ("verify", "run feasibility property suites (or re-check a menu CSV)"),
        ("sweep", "train across a preference parameter sweep"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_common(p)
        if name == "verify":
            p.add_argument("--menu", type=Path, default=None, help="menu CSV to re-check")
        if name == "sweep":
            p.add_argument(
                "--param", choices=("u_ref", "kappa"), default="u_ref",
                help="which preference parameter to sweep",
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(path=str(args.config) if args.config else None)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return 2

    env_seed = os.environ.get("EDGECONTRACT_SEED")
    if args.seed is not None:
        cfg.seed = args.seed
    elif env_seed is not None:
        cfg.seed = int(env_seed)

    out = args.out
    try:
        if args.command == "solve":
            return harness.cmd_solve(cfg, out)
        if args.command == "train":
            return harness.cmd_train(cfg, out)
        if args.command == "verify":
            return harness.cmd_verify(cfg, out, menu_csv=args.menu)
        if args.command == "sweep":
            return harness.cmd_sweep(cfg, out, which=args.param)
    except FloatingPointError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
