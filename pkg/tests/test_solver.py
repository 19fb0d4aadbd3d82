"""Tests for the functional J, the Nehari projection and ground-state descent."""

import numpy as np
import pytest

from app.core.exceptions import ConvergenceError, DegenerateProductError, DomainError
from app.models.grid import HalfSpace
from app.models.operator import EnergyOperator
from app.models.system import CoupledSystem
from app.schemas.kernel import KernelSpec
from app.schemas.solver import RadialProfile, SolverOptions, SystemSpec
from app.services.geometry_service import geometry_service
from app.services.solver_service import solver_service


def positive_pair(system: CoupledSystem, rng) -> tuple[np.ndarray, np.ndarray]:
    phi = system.eigen.phi1
    return phi * rng.uniform(0.5, 1.5, phi.size), phi * rng.uniform(0.5, 1.5, phi.size)


class TestSetup:
    def test_critical_exponent(self, fractional_kernel: KernelSpec) -> None:
        assert solver_service.critical_exponent(fractional_kernel) == pytest.approx(2.0)
        assert solver_service.critical_exponent(KernelSpec.fractional(3, 0.5)) == pytest.approx(1.5)

    def test_exponent_must_exceed_one(self, annulus_operator: EnergyOperator, annulus_system: CoupledSystem) -> None:
        spec = SystemSpec(a1=RadialProfile.constant(0.0), a2=RadialProfile.constant(0.0), q=1.0)
        with pytest.raises(DomainError):
            solver_service.prepare(annulus_operator, spec, eigen=annulus_system.eigen)

    def test_coefficient_below_lambda1(self, annulus_operator: EnergyOperator, annulus_system: CoupledSystem) -> None:
        spec = SystemSpec(a1=RadialProfile.constant(1.0), a2=RadialProfile.constant(0.0), q=1.5)
        with pytest.raises(DomainError):
            solver_service.prepare(annulus_operator, spec, eigen=annulus_system.eigen, coefficient_units="lambda1")

    def test_enforced_subcritical_exponent(
        self, annulus_operator: EnergyOperator, annulus_system: CoupledSystem
    ) -> None:
        spec = SystemSpec(
            a1=RadialProfile.constant(0.0), a2=RadialProfile.constant(0.0), q=2.0, enforce_subcritical=True
        )
        with pytest.raises(DomainError):
            solver_service.prepare(annulus_operator, spec, eigen=annulus_system.eigen)

    def test_profiles_scale_with_lambda1(self, annulus_system: CoupledSystem) -> None:
        assert np.all(annulus_system.a1 == 0.0)
        np.testing.assert_allclose(annulus_system.a2, 0.3 * annulus_system.lambda1, rtol=1e-14)
        assert annulus_system.coercivity == pytest.approx(0.7)
        assert not annulus_system.coefficients_identical


class TestNehari:
    def test_projection_lands_on_the_manifold(self, annulus_system: CoupledSystem, rng) -> None:
        u, v = positive_pair(annulus_system, rng)
        pu, pv, projection = solver_service.nehari_project(annulus_system, u, v)
        assert abs(solver_service.G(annulus_system, pu, pv)) <= 1e-10 * projection.norm_sq
        assert projection.G_after == pytest.approx(0.0, abs=1e-10 * projection.norm_sq)
        assert projection.radial_derivative == pytest.approx((1.0 - annulus_system.q) * projection.norm_sq, rel=1e-9)

    def test_projection_is_scale_invariant(self, annulus_system: CoupledSystem, rng) -> None:
        u, v = positive_pair(annulus_system, rng)
        pu, pv, _ = solver_service.nehari_project(annulus_system, u, v)
        su, sv, _ = solver_service.nehari_project(annulus_system, 3.0 * u, 3.0 * v)
        np.testing.assert_allclose(su, pu, rtol=1e-12)
        np.testing.assert_allclose(sv, pv, rtol=1e-12)

    def test_functional_on_the_manifold(self, annulus_system: CoupledSystem, rng) -> None:
        pu, pv, _ = solver_service.nehari_project(annulus_system, *positive_pair(annulus_system, rng))
        expected = (1.0 - 1.0 / annulus_system.q) * solver_service.product(annulus_system, pu, pv)
        assert solver_service.J(annulus_system, pu, pv) == pytest.approx(expected, rel=1e-9)

    def test_disjoint_supports_are_degenerate(self, annulus_system: CoupledSystem) -> None:
        phi = annulus_system.eigen.phi1
        x1 = annulus_system.op.grid.interior_points[:, 0]
        with pytest.raises(DegenerateProductError):
            solver_service.nehari_project(annulus_system, phi * (x1 > 0), phi * (x1 < 0))

    def test_gradient_matches_central_differences(self, annulus_system: CoupledSystem, rng) -> None:
        u, v = positive_pair(annulus_system, rng)
        du, dv = rng.standard_normal((2, u.size))
        eps = 1e-6
        plus = solver_service.J(annulus_system, u + eps * du, v + eps * dv)
        minus = solver_service.J(annulus_system, u - eps * du, v - eps * dv)
        gu, gv = solver_service.grad_J(annulus_system, u, v)
        directional = annulus_system.op.cell_volume * float(gu @ du + gv @ dv)
        assert (plus - minus) / (2.0 * eps) == pytest.approx(directional, rel=1e-5)

    def test_nehari_radius_is_positive(self, annulus_system: CoupledSystem) -> None:
        assert solver_service.nehari_radius(annulus_system) > 0.0


class TestMinimize:
    def test_ground_state(self, annulus_system: CoupledSystem, annulus_ground_state) -> None:
        u1, u2, report = annulus_ground_state
        assert report.converged
        assert report.positivity.holds
        assert report.min_u1 >= 0.0 and report.min_u2 >= 0.0
        assert np.all(u1 >= 0.0) and np.all(u2 >= 0.0)
        assert report.distinct
        assert report.G_relative < 1e-6
        assert report.min_norm_seen >= report.r0 * (1.0 - 1e-9)
        assert report.J == pytest.approx((1.0 - 1.0 / annulus_system.q) * report.product, rel=1e-6)
        assert report.symmetry is None

    def test_ground_state_is_below_polarized_seeds(self, annulus_system: CoupledSystem, annulus_ground_state, rng) -> None:
        _, _, report = annulus_ground_state
        for _ in range(3):
            pu, pv, _ = solver_service.nehari_project(annulus_system, *positive_pair(annulus_system, rng))
            assert report.J <= solver_service.J(annulus_system, pu, pv) * (1.0 + 1e-8)

    def test_l2_metric_reaches_tight_tolerance(self, annulus_system: CoupledSystem, annulus_ground_state) -> None:
        # the residual target sits below the rounding level of J
        options = SolverOptions(tol=1e-8, metric="l2")
        u1, u2, report = solver_service.minimize(annulus_system, options, symmetry=False)
        assert report.converged
        assert report.residual_relative <= 1e-8 * (1.0 + 1e-6)
        assert report.J == pytest.approx(annulus_ground_state[2].J, rel=1e-8)

    def test_default_metric_is_sobolev(self) -> None:
        assert SolverOptions().metric == "sobolev"

    def test_iteration_cap_carries_best_pair(self, annulus_system: CoupledSystem) -> None:
        options = SolverOptions(tol=1e-12, max_iter=1, metric="l2")
        with pytest.raises(ConvergenceError) as info:
            solver_service.minimize(annulus_system, options, symmetry=False)
        u, v = info.value.best
        assert u.shape == v.shape == (annulus_system.op.n,)

    def test_several_seeds(self, annulus_system: CoupledSystem, annulus_ground_state) -> None:
        options = SolverOptions(tol=1e-6, metric="sobolev", seeds=3)
        _, _, report = solver_service.minimize(
            annulus_system, options, rng=np.random.default_rng(7), threads=2, symmetry=False
        )
        assert report.seed_index in (0, 1, 2)
        assert report.J == pytest.approx(annulus_ground_state[2].J, rel=1e-4)

    def test_empty_seed_list(self, annulus_system: CoupledSystem) -> None:
        with pytest.raises(DomainError):
            solver_service.minimize(annulus_system, seeds=[], symmetry=False)

    def test_symmetry_tolerance_scales_with_fields(self) -> None:
        options = SolverOptions(tol=1e-8)
        assert solver_service.symmetry_tolerance(options, [np.array([2.0, -4.0])]) == pytest.approx(4e-5)


class TestPolarizedStates:
    def test_polarized_ground_state_stays_minimal(self, annulus_system: CoupledSystem, annulus_ground_state) -> None:
        u1, u2, _ = annulus_ground_state
        pairing = geometry_service.reflection_pairing(annulus_system.op.grid, HalfSpace(np.array([1.0, 0.0])))
        p1, p2, report = solver_service.polarize_solution(annulus_system, u1, u2, pairing)
        assert report.holds
        assert report.t0 <= 1.0 + 1e-9
        assert abs(solver_service.G(annulus_system, p1, p2)) <= 1e-9 * solver_service.norm_sq(annulus_system, p1, p2)

    def test_functional_reduction(self, annulus_system: CoupledSystem, rng) -> None:
        pairing = geometry_service.reflection_pairing(annulus_system.op.grid, HalfSpace(np.array([0.0, 1.0])))
        u, v = positive_pair(annulus_system, rng)
        report = solver_service.functional_reduction_check(annulus_system, u, v, pairing)
        assert report.holds
        assert report.J_polarized <= report.J + 1e-12
        with pytest.raises(DomainError):
            solver_service.functional_reduction_check(annulus_system, -u, v, pairing)
