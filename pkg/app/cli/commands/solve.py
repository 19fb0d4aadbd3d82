"""Ground state of the coupled system by Nehari-manifold minimization."""

import argparse

import structlog

from app.cli.context import CommandContext
from app.cli.options import (
    Overrides,
    add_grid_arguments,
    collect,
    grid_overrides,
    merge,
    positive_float,
    positive_int,
)
from app.core.dependencies import build_operator, build_system
from app.core.exceptions import ConvergenceError
from app.services.io_service import io_service
from app.services.solver_service import solver_service

logger = structlog.get_logger()

NAME = "solve"
HELP = "Minimize over the Nehari manifold (solve_report.json, fields.bin, fields.csv, log.csv)"

FIELD_NAMES = ["u1", "u2"]

OVERRIDES = {
    "a1": ("system", "a1"),
    "a2": ("system", "a2"),
    "q": ("system", "q"),
    "tol": ("solver", "tol"),
    "max_iter": ("solver", "max_iter"),
    "seeds": ("solver", "seeds"),
    "metric": ("solver", "metric"),
}


def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_grid_arguments(parser)
    parser.add_argument("--a1", help="Coefficient profile, e.g. '0.0' or '0:0.1, 1:0.4'")
    parser.add_argument("--a2", help="Coefficient profile of the second component")
    parser.add_argument("--q", type=float, help="Coupling exponent")
    parser.add_argument("--tol", type=positive_float, help="Relative residual tolerance")
    parser.add_argument("--max-iter", type=positive_int, help="Iteration cap per descent")
    parser.add_argument("--seeds", type=positive_int, help="Number of seeds")
    parser.add_argument("--metric", choices=["l2", "sobolev"], help="Gradient metric")
    parser.add_argument("--no-symmetry", action="store_true", help="Skip the symmetry report")


def overrides(args: argparse.Namespace) -> Overrides:
    return merge(grid_overrides(args), collect(args, OVERRIDES))


def run(ctx: CommandContext) -> int:
    op = build_operator(ctx.config, ctx.threads)
    system = build_system(ctx.config, op)
    try:
        u1, u2, report = solver_service.minimize(
            system,
            ctx.config.solver,
            rng=ctx.rng,
            threads=ctx.threads,
            symmetry=not ctx.args.no_symmetry,
        )
    except ConvergenceError as exc:
        if exc.best is not None:
            ctx.record(
                *io_service.write_fields(
                    ctx.path("fields_best.bin"), op.grid, list(exc.best), FIELD_NAMES, seed=ctx.seed, source=NAME
                )
            )
        raise

    ctx.write_json("solve_report.json", report)
    ctx.record(
        *io_service.write_fields(ctx.path("fields.bin"), op.grid, [u1, u2], FIELD_NAMES, seed=ctx.seed, source=NAME)
    )
    ctx.record(io_service.write_field_table(ctx.path("fields.csv"), op.grid, [u1, u2], FIELD_NAMES))
    ctx.record(io_service.write_log(ctx.path("log.csv"), report.log))

    passed = (
        report.converged
        and report.positivity.holds
        and report.min_u1 >= 0.0
        and report.min_u2 >= 0.0
        and (report.distinct or report.coefficients_identical)
    )
    if not passed:
        logger.warning(
            "Solve checks failed",
            converged=report.converged,
            positivity=report.positivity.holds,
            distinct=report.distinct,
        )
    return 0 if passed else 1
