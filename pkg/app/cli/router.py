"""
Command-line entry point.

Global flags may be given before or after the subcommand:

    nonlocal-symmetry --config configs/annulus.ini --out results solve --seeds 3
    nonlocal-symmetry verify --quick --seed 7

Exit codes: 0 when every asserted property holds, 1 on failed checks or
runtime errors (diagnostics in error.json), 2 on invalid configuration.
"""

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

import structlog
from pydantic import ValidationError
from pydantic_core import to_jsonable_python

from app.cli.commands import COMMANDS
from app.cli.context import CommandContext
from app.cli.options import apply_overrides, positive_int, seed_type
from app.core.config import settings
from app.core.dependencies import load_config, validation_messages
from app.core.exceptions import AppException, ConfigError
from app.core.logging import configure_logging
from app.schemas.common import ErrorResponse

logger = structlog.get_logger()

CONFIG_EXIT_CODE = 2


def _global_arguments() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="INI experiment file")
    common.add_argument("--out", type=Path, help="Output directory (default: results)")
    common.add_argument("--seed", type=seed_type, help="64-bit seed for every random stream")
    common.add_argument("--threads", type=positive_int, help="Worker threads")
    common.add_argument(
        "--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"], help="Log level"
    )
    common.add_argument("--log-json", action="store_true", help="JSON log lines on stderr")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_arguments()
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="Nonlocal energies, Nehari ground states and their symmetry diagnostics.",
        parents=[common],
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMANDS.values():
        sub = subparsers.add_parser(module.NAME, help=module.HELP, description=module.__doc__, parents=[common])
        module.add_arguments(sub)
    return parser


def _config_failure(messages: list[str]) -> int:
    for message in messages:
        print(f"config error: {message}", file=sys.stderr)
    return CONFIG_EXIT_CODE


def _error_response(exc: AppException) -> ErrorResponse:
    return ErrorResponse(
        detail=exc.message,
        error_code=exc.__class__.__name__,
        errors=to_jsonable_python(exc.details, fallback=str) or None,
        exit_code=exc.exit_code,
    )


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(getattr(args, "log_level", None), True if getattr(args, "log_json", False) else None)
    module = COMMANDS[args.command]

    try:
        config = load_config(getattr(args, "config", None))
        config = apply_overrides(config, module.overrides(args))
    except ConfigError as exc:
        return _config_failure(exc.details.get("errors") or [exc.message])
    except ValidationError as exc:
        return _config_failure(validation_messages(exc))

    ctx = CommandContext(
        command=module.NAME,
        args=args,
        config=config,
        seed=getattr(args, "seed", settings.DEFAULT_SEED),
        threads=getattr(args, "threads", settings.THREADS),
        out=getattr(args, "out", Path("results")),
    )
    ctx.out.mkdir(parents=True, exist_ok=True)
    logger.info("Command started", command=module.NAME, seed=ctx.seed, threads=ctx.threads, out=str(ctx.out))

    try:
        code = module.run(ctx)
    except AppException as exc:
        logger.error(
            "Application exception",
            error_code=exc.__class__.__name__,
            message=exc.message,
            details=exc.details,
        )
        if isinstance(exc, ConfigError):
            _config_failure(exc.details.get("errors") or [exc.message])
        ctx.write_json("error.json", _error_response(exc))
        code = exc.exit_code
    except Exception as exc:
        logger.exception("Unhandled exception", exception=str(exc))
        ctx.write_json(
            "error.json",
            ErrorResponse(detail=str(exc) or "Internal error", error_code="INTERNAL_ERROR"),
        )
        code = 1

    ctx.write_run_record(code)
    logger.info("Command finished", command=module.NAME, exit_code=code, artifacts=len(ctx.artifacts))
    return code


if __name__ == "__main__":
    sys.exit(main())
