"""Table of fractional normalization constants with a quadrature cross-check."""

import argparse

from app.cli.context import CommandContext
from app.cli.options import Overrides, positive_int
from app.services.io_service import io_service
from app.services.kernel_service import kernel_service

NAME = "constants"
HELP = "Tabulate c_{N,s} (constants.json, constants.csv)"

# agreement required between the Gamma formula and the inverted quadrature
CROSS_CHECK_TOL = 1e-3


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--N", type=positive_int, required=True, help="Space dimension")
    parser.add_argument(
        "--s", type=float, nargs="+", default=[0.25, 0.5, 0.75], help="Orders in (0, 1)"
    )


def overrides(args: argparse.Namespace) -> Overrides:
    return {}


def run(ctx: CommandContext) -> int:
    rows = [kernel_service.normalization_check(ctx.args.N, s) for s in ctx.args.s]
    ctx.write_json(
        "constants.json",
        {"tolerance": CROSS_CHECK_TOL, "rows": [row.model_dump(mode="json") for row in rows]},
    )
    ctx.record(
        io_service.write_csv(
            ctx.path("constants.csv"),
            ["N", "s", "gamma_formula", "quadrature", "relative_error"],
            ([r.N, r.s, r.gamma_formula, r.quadrature, r.relative_error] for r in rows),
        )
    )
    return 0 if all(r.relative_error < CROSS_CHECK_TOL for r in rows) else 1
