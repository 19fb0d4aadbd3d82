"""Run the property suites and write a pass/fail summary."""

import argparse

from app.cli.context import CommandContext
from app.cli.options import Overrides
from app.services.verification_service import verification_service

NAME = "verify"
HELP = "Run the property suites (verify_summary.json); exit 0 iff all pass"


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--quick", action="store_true", help="Reduced trial counts and grids")
    parser.add_argument(
        "--only",
        nargs="+",
        choices=list(verification_service.suites),
        help="Run a subset of suites",
    )


def overrides(args: argparse.Namespace) -> Overrides:
    return {}


def run(ctx: CommandContext) -> int:
    summary = verification_service.run(
        ctx.config, ctx.seed, quick=ctx.args.quick, threads=ctx.threads, only=ctx.args.only
    )
    ctx.write_json("verify_summary.json", summary)
    print(f"{summary.total - len(summary.failed)}/{summary.total} property suites passed")
    for name in summary.failed:
        print(f"FAILED {name}")
    return 0 if summary.passed else 1
