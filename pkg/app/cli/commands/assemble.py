"""Assemble the discrete energy operator and write it with its grid and statistics."""

import argparse

import structlog

from app.cli.context import CommandContext
from app.cli.options import Overrides, add_grid_arguments, grid_overrides
from app.core.dependencies import build_operator
from app.services.energy_service import energy_service
from app.services.io_service import io_service
from app.services.kernel_service import kernel_service

logger = structlog.get_logger()

NAME = "assemble"
HELP = "Build the energy operator (operator.bin, grid.bin, operator_stats.json)"


def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_grid_arguments(parser)


def overrides(args: argparse.Namespace) -> Overrides:
    return grid_overrides(args)


def run(ctx: CommandContext) -> int:
    op = build_operator(ctx.config, ctx.threads)
    ctx.write_json("kernel_validation.json", kernel_service.validate(op.kernel))
    ctx.record(io_service.write_operator(ctx.path("operator.bin"), op))
    ctx.record(*io_service.write_grid(ctx.path("grid.bin"), op.grid))
    ctx.write_json("operator_stats.json", energy_service.stats(op))
    logger.info("Assembly written", nodes=op.n, out=str(ctx.out))
    return 0
