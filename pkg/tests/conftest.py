"""Shared fixtures: small grids, assembled operators and a prepared coupled system."""

import numpy as np
import pytest
import structlog

from app.models.grid import Grid
from app.models.operator import EnergyOperator
from app.models.system import CoupledSystem
from app.schemas.geometry import RadialDomain
from app.schemas.kernel import KernelSpec
from app.schemas.solver import RadialProfile, SolveReport, SolverOptions, SystemSpec
from app.services.energy_service import energy_service
from app.services.geometry_service import geometry_service
from app.services.solver_service import solver_service


@pytest.fixture(autouse=True, scope="session")
def quiet_logging() -> None:
    structlog.configure(wrapper_class=structlog.make_filtering_bound_logger(40))


@pytest.fixture(scope="session")
def fractional_kernel() -> KernelSpec:
    return KernelSpec.fractional(2, 0.5)


@pytest.fixture(scope="session")
def disk_grid() -> Grid:
    return geometry_service.make_grid(RadialDomain(shape="ball", r_out=1.0), h=0.125)


@pytest.fixture(scope="session")
def annulus_grid() -> Grid:
    return geometry_service.make_grid(RadialDomain(shape="annulus", r_in=0.5, r_out=1.0), h=0.1)


@pytest.fixture(scope="session")
def disk_operator(fractional_kernel: KernelSpec, disk_grid: Grid) -> EnergyOperator:
    return energy_service.assemble(fractional_kernel, disk_grid)


@pytest.fixture(scope="session")
def annulus_operator(fractional_kernel: KernelSpec, annulus_grid: Grid) -> EnergyOperator:
    return energy_service.assemble(fractional_kernel, annulus_grid)


@pytest.fixture(scope="session")
def annulus_system(annulus_operator: EnergyOperator) -> CoupledSystem:
    spec = SystemSpec(a1=RadialProfile.constant(0.0), a2=RadialProfile.constant(0.3), q=2.0)
    return solver_service.prepare(annulus_operator, spec, coefficient_units="lambda1")


@pytest.fixture(scope="session")
def annulus_ground_state(annulus_system: CoupledSystem) -> tuple[np.ndarray, np.ndarray, SolveReport]:
    options = SolverOptions(tol=1e-8, metric="sobolev")
    return solver_service.minimize(annulus_system, options, symmetry=False)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
