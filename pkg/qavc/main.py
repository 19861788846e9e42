"""The entrypoint of the qavc command-line tool."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from qavc.constants import EXIT_OK, EXIT_VALIDATION, EXIT_VERIFICATION, __version__
from qavc.core.errors import QavcError
from qavc.logutils import set_log_handler
from qavc.runner.models import ExperimentConfig
from qavc.runner.pipeline import run, run_config
from qavc.runner.scenarios import get_scenario, list_scenarios
from qavc.settings import get_settings

logger = logging.getLogger(__name__)

SUITE_CHOICES = ["symmetry", "derand", "capacity", "approx", "all"]


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with the run, scenarios and verify subcommands."""
    parser = argparse.ArgumentParser(
        prog="qavc", description="Numerical laboratory for jammed quantum channels"
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Run an experiment config.")
    run_parser.add_argument(
        "--config", type=Path, required=True, help="JSON config file."
    )
    run_parser.add_argument("--seed", type=int, help="Override the config's root seed.")
    run_parser.add_argument(
        "--out",
        type=Path,
        help="Output directory. [Default = config out_dir or OUT_DIR]",
    )

    subparsers.add_parser("scenarios", help="List the built-in scenarios.")

    verify_parser = subparsers.add_parser("verify", help="Run a verification suite.")
    verify_parser.add_argument("--suite", choices=SUITE_CHOICES, default="all")
    verify_parser.add_argument(
        "--seed", type=int, default=0, help="Root seed. [Default = 0]"
    )
    verify_parser.add_argument("--out", type=Path, help="Output directory.")
    return parser


def _scenarios() -> int:
    for name in list_scenarios():
        print(f"{name}\t{get_scenario(name).description}")
    return EXIT_OK


def _verify(args: argparse.Namespace) -> int:
    config = ExperimentConfig(
        scenario="bitflip-jammer",
        pipeline=["verify"],
        params={"verify": {"suite": args.suite}},
        seed=args.seed,
    )
    record = run_config(config, args.out)
    checks = record.stages[0].checks
    print(f"{sum(c.ok for c in checks)} of {len(checks)} checks passed")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command and map errors to exit codes."""
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(level=settings.log_level)
    set_log_handler()

    try:
        if args.command == "scenarios":
            return _scenarios()
        if args.command == "verify":
            return _verify(args)
        record = run(args.config, seed=args.seed, out=args.out)
        print(f"{record.scenario}: {len(record.stages)} stages {record.status}")
        return EXIT_OK
    except ValidationError as error:
        print(f"invalid input: {error}", file=sys.stderr)
        return EXIT_VALIDATION
    except QavcError as error:
        print(f"{type(error).__name__}: {error}", file=sys.stderr)
        if error.exit_code == EXIT_VERIFICATION:
            logger.error("verification failed: %s", error)
        return error.exit_code
    except (OSError, ValueError) as error:
        print(f"cannot read input: {error}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
