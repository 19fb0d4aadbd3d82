"""Tests for the first eigenpair."""

import numpy as np
import pytest
from scipy import linalg

from app.core.exceptions import ConvergenceError, DomainError
from app.models.operator import EigenResult, EnergyOperator
from app.schemas.geometry import RadialDomain
from app.schemas.kernel import KernelSpec
from app.services.energy_service import energy_service
from app.services.geometry_service import geometry_service
from app.services.spectral_service import spectral_service


@pytest.fixture(scope="module")
def disk_eigen(disk_operator: EnergyOperator) -> EigenResult:
    return spectral_service.lambda1(disk_operator)


def ball_lambda1(kernel: KernelSpec, radius: float, h: float) -> float:
    grid = geometry_service.make_grid(RadialDomain(shape="ball", r_out=radius), h=h)
    return spectral_service.lambda1(energy_service.assemble(kernel, grid)).lambda1


class TestInverseIteration:
    def test_matches_dense_solver(self, disk_operator: EnergyOperator, disk_eigen: EigenResult) -> None:
        smallest = linalg.eigh(disk_operator.scaled_matrix, eigvals_only=True, subset_by_index=[0, 0])[0]
        assert disk_eigen.lambda1 == pytest.approx(smallest, rel=1e-9)

    def test_eigenfunction_is_positive_and_normalized(
        self, disk_operator: EnergyOperator, disk_eigen: EigenResult
    ) -> None:
        assert disk_eigen.phi1.min() > 0.0
        assert energy_service.norm(disk_operator, disk_eigen.phi1) == pytest.approx(1.0, rel=1e-12)

    def test_residual_meets_tolerance(self, disk_operator: EnergyOperator, disk_eigen: EigenResult) -> None:
        phi = disk_eigen.phi1
        defect = energy_service.apply(disk_operator, phi) - disk_eigen.lambda1 * phi
        assert energy_service.norm(disk_operator, defect) <= 1e-10 * disk_eigen.lambda1 * (1 + 1e-6)

    def test_rayleigh_quotients(self, disk_operator: EnergyOperator, disk_eigen: EigenResult, rng) -> None:
        assert spectral_service.rayleigh(disk_operator, disk_eigen.phi1) == pytest.approx(
            disk_eigen.lambda1, rel=1e-9
        )
        for _ in range(5):
            u = rng.standard_normal(disk_operator.n)
            assert spectral_service.rayleigh(disk_operator, u) >= disk_eigen.lambda1 * (1 - 1e-12)

    def test_trial_quotients_are_reported(self, disk_operator: EnergyOperator, rng) -> None:
        trial = np.abs(rng.standard_normal(disk_operator.n))
        result = spectral_service.lambda1(disk_operator, trials=[trial])
        assert len(result.trial_quotients) == 1
        assert result.trial_quotients[0] >= result.lambda1

    def test_subset_of_all_nodes_is_lambda1(self, disk_operator: EnergyOperator, disk_eigen: EigenResult) -> None:
        value = spectral_service.lambda1_subset(disk_operator, np.arange(disk_operator.n))
        assert value == pytest.approx(disk_eigen.lambda1, rel=1e-9)

    def test_iteration_cap_carries_best_iterate(self, disk_operator: EnergyOperator) -> None:
        with pytest.raises(ConvergenceError) as info:
            spectral_service.lambda1(disk_operator, tol=1e-15, max_iter=2)
        assert isinstance(info.value.best, EigenResult)
        assert info.value.residual is not None

    def test_tolerance_must_be_positive(self, disk_operator: EnergyOperator) -> None:
        with pytest.raises(DomainError):
            spectral_service.lambda1(disk_operator, tol=0.0)

    def test_summary(self, disk_operator: EnergyOperator, disk_eigen: EigenResult) -> None:
        summary = spectral_service.summary(disk_operator, disk_eigen)
        assert summary.n_interior == disk_operator.n
        assert summary.min_phi1 > 0.0


class TestDomainDependence:
    def test_shrinking_balls_raise_lambda1(self, fractional_kernel: KernelSpec) -> None:
        values = [ball_lambda1(fractional_kernel, r, 0.1) for r in (1.0, 0.7, 0.5)]
        assert values[0] < values[1] < values[2]

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_rescaling_identity(self, s: float) -> None:
        kernel = KernelSpec.fractional(2, s)
        base = ball_lambda1(kernel, 1.0, 0.125)
        wide = ball_lambda1(kernel, 2.0, 0.25)
        assert wide == pytest.approx(2.0 ** (-2.0 * s) * base, rel=1e-8)
