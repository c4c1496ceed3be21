"""Command-line entry point.

    circring <subcommand> --config <path> [--out <dir>] [--seed <n>] [--threads <n>]

Exit codes: 0 success; 2 usage error; 3 configuration error; 4 numerical or
truncation failure; 5 calibration failure (no root / aborted search).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from .calibrate import ConditionSolveError, OptimizeAbort
from .config import ConfigError, parse_config
from .quasiparticle import QuadratureError
from .ring import TruncationError
from .sweeps import RUNNERS, STOCHASTIC, resolve_threads, write_sidecar

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4
EXIT_CALIBRATION = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="circring",
        description="Simulate and calibrate a three-junction superconducting "
                    "ring circulator.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} sweep")
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default=".", help="output directory (default: cwd)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's random seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (overrides CIRCRING_THREADS and config)")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = parse_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        if args.subcommand in STOCHASTIC:
            config.require_seed()
        threads = resolve_threads(config, args.threads)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)

        paths = RUNNERS[args.subcommand](config, out, threads)

        config_text = Path(args.config).read_text(encoding="utf-8")
        for path in paths:
            write_sidecar(path, args.subcommand, config_text, config.seed)
        for path in paths:
            print(path)
        return EXIT_OK
    except ConfigError as exc:
        print(f"circring: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TruncationError, QuadratureError, FloatingPointError) as exc:
        print(f"circring: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OptimizeAbort as exc:
        cause = exc.__cause__
        if isinstance(cause, TruncationError):
            print(f"circring: numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"circring: calibration failure: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except ConditionSolveError as exc:
        print(f"circring: calibration failure: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION


if __name__ == "__main__":
    sys.exit(main())
