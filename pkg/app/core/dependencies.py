"""Builders turning an experiment configuration into kernels, grids, operators and systems."""

import configparser
from pathlib import Path

import structlog
from pydantic import ValidationError

from app.core.exceptions import ConfigError
from app.models.grid import Grid
from app.models.operator import EigenResult, EnergyOperator
from app.models.system import CoupledSystem
from app.schemas.experiment import ExperimentConfig
from app.schemas.kernel import KernelSpec
from app.services.energy_service import energy_service
from app.services.geometry_service import geometry_service
from app.services.kernel_service import kernel_service
from app.services.solver_service import solver_service
from app.services.spectral_service import spectral_service

logger = structlog.get_logger()


def validation_messages(exc: ValidationError) -> list[str]:
    """Dotted field paths with their messages, e.g. 'system.q: ...'."""
    return [
        f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}"
        for error in exc.errors()
    ]


def load_config(path: Path | None) -> ExperimentConfig:
    """
    Parse an INI experiment file.

    Sections map to ExperimentConfig fields; ``key = value`` lines to their
    entries. A missing path yields the default configuration.

    Raises:
        ConfigError: On unreadable files, syntax errors or validation failures
    """
    if path is None:
        return ExperimentConfig()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError("Cannot read configuration", details={"path": str(path), "error": str(exc)}) from exc
    except configparser.Error as exc:
        raise ConfigError("Malformed configuration", details={"path": str(path), "error": str(exc)}) from exc

    raw = {section: dict(parser.items(section)) for section in parser.sections()}
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        messages = validation_messages(exc)
        raise ConfigError("; ".join(messages), details={"path": str(path), "errors": messages}) from exc
    table = config.kernel.table
    if table is not None and not table.is_absolute():
        # kernel tables are located relative to the configuration file
        config.kernel.table = path.parent / table
    logger.debug("Configuration loaded", path=str(path), sections=sorted(raw))
    return config


def build_kernel(config: ExperimentConfig) -> KernelSpec:
    section = config.kernel
    N = config.domain.N
    if section.family == "fractional":
        assert section.s is not None
        return KernelSpec.fractional(N, section.s)
    assert section.table is not None
    return kernel_service.load_tabulated(section.table, N, section.strictly_decreasing)


def build_grid(config: ExperimentConfig) -> Grid:
    return geometry_service.make_grid(
        config.domain.to_domain(), h=config.grid.h, target_nodes=config.grid.target_nodes
    )


def build_operator(config: ExperimentConfig, threads: int | None = None) -> EnergyOperator:
    return energy_service.assemble(
        build_kernel(config),
        build_grid(config),
        cutoff_radius=config.kernel.cutoff_radius,
        threads=threads,
    )


def build_system(
    config: ExperimentConfig, op: EnergyOperator, eigen: EigenResult | None = None
) -> CoupledSystem:
    eigen = eigen or spectral_service.lambda1(op)
    return solver_service.prepare(
        op, config.system.to_spec(), eigen, coefficient_units=config.system.coefficient_units
    )
