from __future__ import annotations

import argparse
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import NoReturn

from pydantic import ValidationError

from .artifacts import compare_golden
from .config import ScenarioConfig, bundled_scenarios, load_scenario
from .exceptions import ArtifactError
from .logger import logger
from .run import SUBCOMMANDS, ExitCode, RunConfig, Runner, tail_summary

LOG_LEVEL_ENV = "TRIPLEPOINT_LOG_LEVEL"


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as exceptions, so they map to their own exit code."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(
        prog="triplepoint",
        description="Pseudo-Abelian integrals of an unfolded Darboux triple point.",
    )
    parser.add_argument(
        "--log-level",
        default=os.environ.get(LOG_LEVEL_ENV, "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Level of the triplepoint logger (default: $TRIPLEPOINT_LOG_LEVEL or INFO).",
    )
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    run = commands.add_parser("run", help="Run one experiment on a scenario.")
    run.add_argument("subcommand", choices=SUBCOMMANDS)
    run.add_argument(
        "scenario", nargs="?", help="Bundled scenario name or path to a scenario JSON file."
    )
    run.add_argument("--config", type=Path, help="Path to a scenario JSON file.")
    run.add_argument("--out", type=Path, help="Output directory.")
    run.add_argument(
        "--threads", type=int, default=0, help="Worker threads; 0 is the sequential reference."
    )
    run.add_argument("--golden", type=Path, help="Directory of pinned artifacts to compare with.")
    run.add_argument(
        "--update-golden",
        action="store_true",
        help="Write the fresh artifacts into --golden instead of comparing.",
    )
    run.add_argument("--rel-tol", type=float, default=1e-6, help="Golden comparison tolerance.")
    run.add_argument("--no-tracing", action="store_true", help="Disable stage timing spans.")

    compare = commands.add_parser(
        "compare-golden", help="Compare a CSV artifact with a golden one."
    )
    compare.add_argument("artifact", type=Path)
    compare.add_argument("golden", type=Path)
    compare.add_argument("--rel-tol", type=float, default=1e-6)

    commands.add_parser("scenarios", help="List the bundled scenarios.")
    return parser


def _configure_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(level)
    logger.propagate = False


def format_validation_error(error: ValidationError) -> list[str]:
    """One line per failing field, naming its dotted location."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"config: {location}: {item['msg']}")
    return lines


def _load(args: argparse.Namespace) -> ScenarioConfig:
    source = args.config or args.scenario
    if source is None:
        raise UsageError("triplepoint run: give a scenario name or --config PATH")
    return load_scenario(source)


def _run(args: argparse.Namespace) -> int:
    try:
        config = _load(args)
    except FileNotFoundError as e:
        print(str(e), file=sys.stderr)
        return ExitCode.USAGE
    except ValidationError as e:
        for line in format_validation_error(e):
            print(line, file=sys.stderr)
        return ExitCode.MALFORMED_CONFIG

    if args.update_golden and args.golden is None:
        raise UsageError("triplepoint run: --update-golden needs --golden DIR")
    if args.threads < 0:
        raise UsageError("triplepoint run: --threads must be non-negative")
    run_config = RunConfig(
        threads=args.threads,
        output_dir=args.out or (Path(config.output_dir) if config.output_dir else None),
        golden_dir=args.golden,
        golden_rel_tol=args.rel_tol,
        update_golden=args.update_golden,
        tracing_disabled=args.no_tracing,
    )
    result = Runner.run(args.subcommand, config, run_config)
    print(tail_summary(result))
    return result.exit_code


def _compare(args: argparse.Namespace) -> int:
    try:
        report = compare_golden(args.artifact, args.golden, args.rel_tol)
    except (ArtifactError, OSError) as e:
        print(str(e), file=sys.stderr)
        return ExitCode.VALIDATION
    for v in report.violations:
        print(f"row {v.row} column {v.column}: {v.actual} != {v.expected}")
    return ExitCode.OK if report.ok else ExitCode.VALIDATION


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args.log_level)
        if args.command == "scenarios":
            print("\n".join(bundled_scenarios()))
            return ExitCode.OK
        if args.command == "compare-golden":
            return _compare(args)
        return _run(args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return ExitCode.USAGE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
