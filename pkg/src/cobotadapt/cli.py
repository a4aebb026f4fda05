"""Command-line entry point: ``cobotadapt <subcommand> [--config PATH] [--seed N] [--out-dir DIR] [--episodes N] [--tasks K]``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ConfigurationError
from .experiments import (
    MODES,
    ExperimentConfig,
    run_gen_library,
    run_long_term,
    run_report,
    run_short_term,
    run_train,
    run_validate_human,
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cobotadapt", description="Simulated human-robot collaboration experiments.")
    p.add_argument("command", choices=MODES)
    p.add_argument("--config", help="experiment configuration (JSON)")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    p.add_argument("--out-dir", help="directory for all outputs (default: config outDir or ./out)")
    p.add_argument("--episodes", type=int, help="training episodes per (type, policy) pair")
    p.add_argument("--tasks", type=int, help="tasks per run (K)")
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {"mode": args.command}
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    if args.out_dir:
        changes["out_dir"] = args.out_dir
    if args.tasks is not None:
        changes["K"] = args.tasks
    return replace(cfg, **changes)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "gen-library":
            written = run_gen_library(cfg)
        elif args.command == "train":
            written = run_train(cfg, episodes=args.episodes)
        elif args.command == "short-term":
            written = run_short_term(cfg)
        elif args.command == "long-term":
            written = run_long_term(cfg)
        elif args.command == "validate-human":
            written = run_validate_human(cfg)
        else:
            written = run_report(cfg)
    except (ConfigurationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for key, path in written.items():
        print(f"{key}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
