"""
Symmetry diagnostics for stored fields.

Reads a field binary written by ``solve`` or ``eigen``, rebuilds its grid and
reports polarization verdicts per lattice direction, the common axis and the
foliated Schwarz checks. For a pair of planar fields the rotating-plane scan
of the linearized difference is added; it needs the coupled system, so the
kernel and coefficients come from the configuration.
"""

import argparse
from pathlib import Path

import structlog

from app.cli.context import CommandContext
from app.cli.options import Overrides, collect, positive_float
from app.core.dependencies import build_kernel, build_system
from app.services.coupling_service import coupling_service
from app.services.energy_service import energy_service
from app.services.geometry_service import geometry_service
from app.services.io_service import io_service
from app.services.polarization_service import polarization_service
from app.services.solver_service import solver_service

logger = structlog.get_logger()

NAME = "symmetry"
HELP = "Symmetry report for stored fields (symmetry_report.json, rings.csv, rotating_plane.json)"

OVERRIDES = {
    "tol": ("diagnostics", "tol"),
    "resolution": ("diagnostics", "resolution_deg"),
}


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--fields", type=Path, required=True, help="Field binary with a .json sidecar")
    parser.add_argument("--tol", type=float, help="Absolute symmetry tolerance")
    parser.add_argument("--resolution", type=positive_float, help="Sweep resolution in degrees")


def overrides(args: argparse.Namespace) -> Overrides:
    return collect(args, OVERRIDES)


def run(ctx: CommandContext) -> int:
    sidecar, values = io_service.read_fields(ctx.args.fields)
    grid = geometry_service.make_grid(sidecar.grid.domain, h=sidecar.grid.h)
    io_service.check_grid(sidecar, grid)
    fields = list(values)

    diagnostics = ctx.config.diagnostics
    tol = diagnostics.tol
    if tol is None:
        tol = solver_service.symmetry_tolerance(ctx.config.solver, fields)
    report = polarization_service.symmetry_report(
        grid, fields, tol, resolution_deg=diagnostics.resolution_deg, threads=ctx.threads
    )
    ctx.write_json("symmetry_report.json", report)
    rows = (
        [verdict.field_index, ring.radius, angle, value]
        for verdict in report.foliated
        for ring in verdict.rings
        for angle, value in zip(ring.angles, ring.values)
    )
    ctx.record(io_service.write_csv(ctx.path("rings.csv"), ["field", "radius", "angle_deg", "value"], rows))

    passed = report.foliated_holds
    if sidecar.count == 2 and grid.dimension == 2:
        op = energy_service.assemble(
            build_kernel(ctx.config), grid, cutoff_radius=ctx.config.kernel.cutoff_radius, threads=ctx.threads
        )
        system = build_system(ctx.config, op)
        scan = coupling_service.rotating_plane_scan(
            system,
            fields[0],
            fields[1],
            tol=tol,
            resolution_deg=diagnostics.resolution_deg,
            threads=ctx.threads,
            axis=report.axis,
        )
        ctx.write_json("rotating_plane.json", scan)
        passed = passed and scan.monotone is not False

    logger.info("Symmetry diagnostics written", fields=sidecar.count, axis=report.axis.status, passed=passed)
    return 0 if passed else 1
