"""First Dirichlet eigenpair by inverse iteration."""

import argparse

from app.cli.context import CommandContext
from app.cli.options import Overrides, add_grid_arguments, grid_overrides, positive_float, positive_int
from app.core.dependencies import build_operator
from app.services.io_service import io_service
from app.services.spectral_service import spectral_service

NAME = "eigen"
HELP = "Compute lambda1 and phi1 (eigen.json, phi1.bin, phi1.csv)"


def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_grid_arguments(parser)
    parser.add_argument("--tol", type=positive_float, help="Relative residual tolerance")
    parser.add_argument("--max-iter", type=positive_int, help="Iteration cap")


def overrides(args: argparse.Namespace) -> Overrides:
    return grid_overrides(args)


def run(ctx: CommandContext) -> int:
    op = build_operator(ctx.config, ctx.threads)
    result = spectral_service.lambda1(op, tol=ctx.args.tol, max_iter=ctx.args.max_iter)
    ctx.write_json("eigen.json", spectral_service.summary(op, result))
    ctx.record(
        *io_service.write_fields(ctx.path("phi1.bin"), op.grid, [result.phi1], ["phi1"], seed=ctx.seed, source=NAME)
    )
    ctx.record(io_service.write_field_table(ctx.path("phi1.csv"), op.grid, [result.phi1], ["phi1"]))
    return 0
