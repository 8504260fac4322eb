"""Command-line entry point: ``weakkam <subcommand> --config PATH``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import load_config
from .errors import (
    ConfigError,
    GridMismatch,
    PropertyViolation,
    SolverError,
    WeakKamError,
    WindowSearchFailed,
    WindowTooSmall,
)
from .experiments import RUNNERS

log = logging.getLogger("weakkam")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4


def build_parser():
    parser = argparse.ArgumentParser(prog="weakkam", description="Discrete weak KAM experiments on periodic grids.")
    parser.add_argument("subcommand", choices=sorted(RUNNERS))
    parser.add_argument("--config", required=True, help="flat section.key = value config file")
    parser.add_argument("--out", default=None, help="output directory (default: $WEAKKAM_OUT or ./weakkam_out)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for independent cells")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized property checks")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run_subcommand(name, config, out, threads=1, seed=0):
    """Run one subcommand; returns the exit code."""
    try:
        cfg = load_config(config) if isinstance(config, (str, os.PathLike)) else config
        out = out or cfg.output.directory or os.environ.get("WEAKKAM_OUT") or "weakkam_out"
        os.makedirs(out, exist_ok=True)
        summary = RUNNERS[name](cfg, out, threads=threads, seed=seed)
        log.info("%s finished: %s", name, summary)
        return EXIT_OK
    except (ConfigError, WindowTooSmall, WindowSearchFailed, GridMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PropertyViolation as exc:
        print(f"property violation: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except (SolverError, WeakKamError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run_subcommand(args.subcommand, args.config, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
