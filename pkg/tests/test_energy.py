"""Tests for operator assembly and the quadratic-form calculus."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import ellipe

from app.core.config import settings as app_settings
from app.core.exceptions import DomainError, GridMismatchError, KernelValidationError, ResourceLimitError
from app.models.grid import Grid
from app.models.operator import EnergyOperator
from app.schemas.kernel import KernelSpec
from app.services.energy_service import energy_service
from app.services.kernel_service import kernel_service

ROTATION_90 = np.array([[0, -1], [1, 0]])


class TestAssembly:
    def test_weights_are_symmetric_and_nonnegative(self, disk_operator: EnergyOperator) -> None:
        W = disk_operator.weights
        np.testing.assert_array_equal(W, W.T)
        assert np.all(W >= 0.0)
        assert np.all(np.diag(W) == 0.0)
        assert np.all(disk_operator.kappa >= 0.0)

    def test_killing_term_grows_towards_the_boundary(self, disk_operator: EnergyOperator) -> None:
        radii = disk_operator.grid.interior_radii
        center = int(np.argmin(radii))
        rim = int(np.argmax(radii))
        assert disk_operator.kappa[rim] > disk_operator.kappa[center]

    def test_near_field_table(self, fractional_kernel: KernelSpec) -> None:
        near = energy_service.near_field_weights(fractional_kernel, 0.1, 2)
        assert set(near) == {1, 2}
        assert near[1] > near[2] > 0.0

    def test_stats(self, disk_operator: EnergyOperator) -> None:
        stats = energy_service.stats(disk_operator)
        assert stats.grid.n_interior == disk_operator.n
        assert stats.kappa_min == pytest.approx(float(disk_operator.kappa.min()))
        assert stats.memory_bytes == energy_service.estimate_bytes(disk_operator.n)

    def test_dimension_mismatch(self, disk_grid: Grid) -> None:
        with pytest.raises(DomainError):
            energy_service.assemble(KernelSpec.fractional(3, 0.5), disk_grid)

    def test_invalid_kernel_rejected(self, disk_grid: Grid) -> None:
        flat = KernelSpec.tabulated(2, [0.1, 1.0], [1.0, 1.0], strictly_decreasing=False)
        with pytest.raises(KernelValidationError):
            energy_service.assemble(flat, disk_grid)

    def test_memory_cap(self, fractional_kernel: KernelSpec, disk_grid: Grid, monkeypatch) -> None:
        monkeypatch.setattr(app_settings, "MAX_OPERATOR_BYTES", 1024)
        with pytest.raises(ResourceLimitError):
            energy_service.assemble(fractional_kernel, disk_grid)

    def test_thread_count_does_not_change_weights(
        self, fractional_kernel: KernelSpec, disk_grid: Grid, disk_operator: EnergyOperator
    ) -> None:
        threaded = energy_service.assemble(fractional_kernel, disk_grid, threads=3)
        np.testing.assert_allclose(threaded.weights, disk_operator.weights, rtol=1e-14)
        np.testing.assert_allclose(threaded.kappa, disk_operator.kappa, rtol=1e-12)

    def test_cutoff_moves_far_weights_into_kappa(
        self, fractional_kernel: KernelSpec, disk_grid: Grid, disk_operator: EnergyOperator
    ) -> None:
        truncated = energy_service.assemble(fractional_kernel, disk_grid, cutoff_radius=0.5)
        assert truncated.weights.sum() < disk_operator.weights.sum()
        assert np.all(truncated.kappa >= disk_operator.kappa)
        np.testing.assert_allclose(
            truncated.degree + truncated.kappa, disk_operator.degree + disk_operator.kappa, rtol=1e-12
        )

    def test_kappa_at_the_centre_is_the_exterior_mass(self, disk_operator: EnergyOperator) -> None:
        # c_{2,1/2} * 2 pi * integral of r^-2 over (1, inf) = 1
        centre = int(np.argmin(disk_operator.grid.interior_radii))
        assert disk_operator.grid.interior_radii[centre] == 0.0
        assert disk_operator.kappa[centre] / disk_operator.cell_volume == pytest.approx(1.0, rel=1e-8)

    def test_kappa_matches_the_elliptic_closed_form(self, disk_operator: EnergyOperator) -> None:
        radii = disk_operator.grid.interior_radii
        expected = 2.0 * ellipe(radii**2) / (np.pi * (1.0 - radii**2))
        np.testing.assert_allclose(disk_operator.kappa / disk_operator.cell_volume, expected, rtol=1e-8)

    def test_kappa_is_lattice_invariant(self, annulus_operator: EnergyOperator) -> None:
        perm = energy_service.lattice_symmetry(annulus_operator, ROTATION_90)
        np.testing.assert_array_equal(annulus_operator.kappa[perm], annulus_operator.kappa)

    def test_annulus_kappa_includes_the_hole(
        self, fractional_kernel: KernelSpec, annulus_operator: EnergyOperator
    ) -> None:
        grid = annulus_operator.grid
        outer, _ = kernel_service.ball_exterior_mass(fractional_kernel, grid.interior_radii, grid.domain.r_out)
        hole = annulus_operator.kappa / grid.cell_volume - outer
        assert np.all(hole > 0.0)
        inner_rim = int(np.argmin(grid.interior_radii))
        outer_rim = int(np.argmax(grid.interior_radii))
        assert hole[inner_rim] > hole[outer_rim]


class TestQuadraticForm:
    def test_gram_and_difference_forms_agree(self, disk_operator: EnergyOperator, rng) -> None:
        u = rng.standard_normal(disk_operator.n)
        assert energy_service.energy(disk_operator, u) == pytest.approx(
            energy_service.bilinear(disk_operator, u, u), rel=1e-10
        )

    def test_apply_represents_the_form(self, disk_operator: EnergyOperator, rng) -> None:
        u, v = rng.standard_normal((2, disk_operator.n))
        lhs = energy_service.inner(disk_operator, energy_service.apply(disk_operator, u), v)
        assert lhs == pytest.approx(energy_service.bilinear(disk_operator, u, v), rel=1e-9)

    def test_bilinear_matches_exactly_rounded_sum(self, disk_operator: EnergyOperator, rng) -> None:
        u, v = rng.standard_normal((2, disk_operator.n))
        du = u[:, None] - u[None, :]
        dv = v[:, None] - v[None, :]
        reference = math.fsum((disk_operator.weights * du * dv).ravel()) / 2 + math.fsum(disk_operator.kappa * u * v)
        assert energy_service.bilinear(disk_operator, u, v) == pytest.approx(reference, rel=1e-12)

    def test_bilinear_is_symmetric(self, disk_operator: EnergyOperator, rng) -> None:
        u, v = rng.standard_normal((2, disk_operator.n))
        assert energy_service.bilinear(disk_operator, u, v) == pytest.approx(
            energy_service.bilinear(disk_operator, v, u), rel=1e-12
        )

    @settings(max_examples=25, deadline=None)
    @given(data=st.data())
    def test_parts_interact_negatively(self, disk_operator: EnergyOperator, data) -> None:
        u = data.draw(
            arrays(np.float64, disk_operator.n, elements=st.floats(min_value=-10.0, max_value=10.0))
        )
        plus, minus = energy_service.parts(u)
        np.testing.assert_array_equal(plus - minus, u)
        assert np.all(plus * minus == 0.0)
        scale = max(energy_service.energy(disk_operator, u), 1.0)
        assert energy_service.bilinear(disk_operator, plus, minus) <= 1e-12 * scale
        assert energy_service.energy(disk_operator, np.abs(u)) <= energy_service.energy(disk_operator, u) + 1e-12 * scale

    def test_absolute_value_strictly_lowers_sign_changing_energy(self, disk_operator: EnergyOperator, rng) -> None:
        u = rng.standard_normal(disk_operator.n)
        assert energy_service.energy(disk_operator, np.abs(u)) < energy_service.energy(disk_operator, u)

    def test_energy_is_positive(self, disk_operator: EnergyOperator, rng) -> None:
        assert energy_service.energy(disk_operator, rng.standard_normal(disk_operator.n)) > 0.0

    def test_rotation_invariance(self, disk_operator: EnergyOperator, rng) -> None:
        perm = energy_service.lattice_symmetry(disk_operator, ROTATION_90)
        u = rng.standard_normal(disk_operator.n)
        assert energy_service.energy(disk_operator, u[perm]) == pytest.approx(
            energy_service.energy(disk_operator, u), rel=1e-12
        )

    def test_rho_between_energy_and_twice_energy(self, disk_operator: EnergyOperator, rng) -> None:
        u = rng.standard_normal(disk_operator.n)
        energy = energy_service.energy(disk_operator, u)
        rho = energy_service.rho(disk_operator, u)
        assert energy * (1 - 1e-10) <= rho <= 2.0 * energy * (1 + 1e-10)

    def test_field_on_wrong_grid(self, disk_operator: EnergyOperator) -> None:
        with pytest.raises(GridMismatchError):
            energy_service.energy(disk_operator, np.zeros(disk_operator.n + 2))

    def test_submatrix_is_principal_block(self, disk_operator: EnergyOperator) -> None:
        nodes = np.array([0, 5, 9])
        np.testing.assert_array_equal(
            energy_service.submatrix(disk_operator, nodes), disk_operator.matrix[np.ix_(nodes, nodes)]
        )
        with pytest.raises(DomainError):
            energy_service.submatrix(disk_operator, [])
