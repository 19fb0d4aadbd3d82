"""Tests for polarization, the two-point inequalities and foliated Schwarz detection."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.config import settings as app_settings
from app.core.exceptions import DomainError, PairingError
from app.models.grid import Grid, HalfSpace, ReflectionPairing
from app.models.operator import EnergyOperator
from app.schemas.geometry import RadialDomain
from app.services.geometry_service import geometry_service
from app.services.polarization_service import polarization_service

value = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)


@pytest.fixture(scope="module")
def vertical_pairing(disk_grid: Grid) -> ReflectionPairing:
    return geometry_service.reflection_pairing(disk_grid, HalfSpace(np.array([1.0, 0.0])))


def tilted(grid: Grid, p: tuple[float, float]) -> np.ndarray:
    return np.exp(grid.interior_points @ np.asarray(p))


def bump(grid: Grid) -> np.ndarray:
    return 1.0 - np.sum(grid.interior_points**2, axis=1)


class TestPolarize:
    def test_is_a_rearrangement(self, vertical_pairing: ReflectionPairing, rng) -> None:
        u = rng.standard_normal(vertical_pairing.grid.n_interior)
        polarized = polarization_service.polarize(u, vertical_pairing)
        np.testing.assert_array_equal(np.sort(polarized), np.sort(u))

    def test_is_idempotent_and_polarized(self, vertical_pairing: ReflectionPairing, rng) -> None:
        u = rng.standard_normal(vertical_pairing.grid.n_interior)
        once = polarization_service.polarize(u, vertical_pairing)
        twice = polarization_service.polarize(once, vertical_pairing)
        np.testing.assert_array_equal(once, twice)
        assert polarization_service.is_polarized(once, vertical_pairing).holds
        assert not polarization_service.is_polarized(-once + once.max(), vertical_pairing).holds

    def test_flip_polarizes_towards_the_other_side(self, vertical_pairing: ReflectionPairing, rng) -> None:
        u = rng.standard_normal(vertical_pairing.grid.n_interior)
        flipped = polarization_service.polarize(u, vertical_pairing, flip=True)
        x = vertical_pairing.grid.interior_points[:, 0]
        mirror = polarization_service.polarize(u, vertical_pairing)
        np.testing.assert_array_equal(flipped[x > 0], np.minimum(mirror[x > 0], flipped[x > 0]))

    def test_interpolated_pairing_rejected(self, disk_grid: Grid, rng) -> None:
        pairing = geometry_service.reflection_pairing(disk_grid, HalfSpace.from_angle(0.3))
        with pytest.raises(PairingError):
            polarization_service.polarize(rng.standard_normal(disk_grid.n_interior), pairing)


class TestInequalities:
    def test_energy_does_not_increase(
        self, disk_operator: EnergyOperator, vertical_pairing: ReflectionPairing, rng
    ) -> None:
        u = rng.standard_normal(disk_operator.n)
        report = polarization_service.energy_reduction_check(disk_operator, u, vertical_pairing)
        assert report.holds
        assert report.energy_polarized <= report.energy
        assert report.dichotomy_asserted

    def test_polarized_input_is_classified(
        self, disk_operator: EnergyOperator, vertical_pairing: ReflectionPairing, rng
    ) -> None:
        u = polarization_service.polarize(rng.standard_normal(disk_operator.n), vertical_pairing)
        report = polarization_service.energy_reduction_check(disk_operator, u, vertical_pairing)
        assert report.equality
        assert report.classification == "u = u_H"

    def test_reverse_polarized_input_is_classified(
        self, disk_operator: EnergyOperator, vertical_pairing: ReflectionPairing
    ) -> None:
        u = tilted(disk_operator.grid, (-1.0, 0.0))
        report = polarization_service.energy_reduction_check(disk_operator, u, vertical_pairing)
        assert report.equality
        assert report.classification == "u = u_{σ_H(H)}"

    def test_product_norm_grows(self, vertical_pairing: ReflectionPairing, rng) -> None:
        n = vertical_pairing.grid.n_interior
        u, v = rng.random((2, n))
        report = polarization_service.product_norm_check(u, v, vertical_pairing, q=2.0)
        assert report.holds

    def test_product_norm_equality_for_polarized_pair(self, vertical_pairing: ReflectionPairing, rng) -> None:
        n = vertical_pairing.grid.n_interior
        u, v = (polarization_service.polarize(w, vertical_pairing) for w in rng.random((2, n)))
        report = polarization_service.product_norm_check(u, v, vertical_pairing, q=1.5)
        assert report.equality
        assert report.condition

    def test_product_norm_requires_nonnegative_fields(self, vertical_pairing: ReflectionPairing) -> None:
        n = vertical_pairing.grid.n_interior
        with pytest.raises(DomainError):
            polarization_service.product_norm_check(-np.ones(n), np.ones(n), vertical_pairing, q=2.0)

    @settings(max_examples=100)
    @given(a=value, b=value, c=value, d=value)
    def test_two_point_identity(self, a: float, b: float, c: float, d: float) -> None:
        values = polarization_service.two_point_identity(a, b, c, d)
        assert float(values.f) == pytest.approx(float(values.closed_form), abs=1e-9)
        assert float(values.g) == pytest.approx(-float(values.f), abs=1e-9)
        assert float(values.f) >= -1e-9


class TestFoliatedSchwarz:
    def test_ring_radii(self, disk_grid: Grid) -> None:
        assert polarization_service.ring_radii(disk_grid) == pytest.approx([0.25, 0.5, 0.75])

    def test_tilted_exponential_is_symmetric_about_its_axis(self, disk_grid: Grid) -> None:
        u = tilted(disk_grid, (1.0, 0.0))
        assert polarization_service.foliated_schwarz_check(disk_grid, u, [1.0, 0.0]).holds
        assert not polarization_service.foliated_schwarz_check(disk_grid, u, [-1.0, 0.0]).holds

    def test_three_dimensional_grid_rejected(self) -> None:
        grid = geometry_service.make_grid(RadialDomain(shape="ball", r_out=1.0, dimension=3), h=0.5)
        with pytest.raises(DomainError):
            polarization_service.foliated_schwarz_check(grid, np.ones(grid.n_interior), [1.0, 0.0, 0.0])

    def test_dominance_arc_finds_the_axis(self, disk_grid: Grid) -> None:
        result = polarization_service.dominance_arc(disk_grid, [tilted(disk_grid, (1.0, 0.0))], resolution_deg=5.0)
        assert result.status == "axis"
        assert result.axis is not None
        assert result.axis[0] > math.cos(math.radians(5.0))
        assert result.members == 37

    def test_endpoint_tolerance_follows_the_resolution(self, disk_grid: Grid) -> None:
        assert polarization_service.endpoint_tolerance(1.0) == pytest.approx(math.radians(1.0))
        assert polarization_service.endpoint_tolerance(2.0) == pytest.approx(2.0 * polarization_service.endpoint_tolerance(1.0))
        result = polarization_service.dominance_arc(disk_grid, [tilted(disk_grid, (1.0, 0.0))], resolution_deg=1.0)
        assert result.status == "axis"
        assert result.endpoint_tolerance == pytest.approx(math.radians(1.0))
        assert max(result.endpoint_asymmetry) <= result.endpoint_tolerance

    def test_endpoint_asymmetry_above_tolerance_rejects_the_axis(self, disk_grid: Grid, monkeypatch) -> None:
        x = disk_grid.interior_points
        u = np.exp(2.0 * x[:, 0]) + 0.05 * np.exp(x[:, 1])
        result = polarization_service.dominance_arc(disk_grid, [u], resolution_deg=5.0)
        worst = max(result.endpoint_asymmetry)
        assert worst > 0.0

        per_radian = worst / math.radians(5.0)
        monkeypatch.setattr(app_settings, "ENDPOINT_SYMMETRY_FACTOR", 0.99 * per_radian)
        assert polarization_service.dominance_arc(disk_grid, [u], resolution_deg=5.0).status == "none"
        monkeypatch.setattr(app_settings, "ENDPOINT_SYMMETRY_FACTOR", 1.01 * per_radian)
        assert polarization_service.dominance_arc(disk_grid, [u], resolution_deg=5.0).status == "axis"

    def test_radial_field(self, disk_grid: Grid) -> None:
        result = polarization_service.find_axis(disk_grid, [bump(disk_grid)], resolution_deg=10.0)
        assert result.status == "radial"
        assert result.members == result.sweep_size == 36

    def test_sweep_threads_agree(self, disk_grid: Grid) -> None:
        member = polarization_service.dominance_member(disk_grid, [tilted(disk_grid, (0.0, 1.0))], 1e-9)
        _, serial = polarization_service.sweep(disk_grid, member, 15.0, threads=1)
        _, pooled = polarization_service.sweep(disk_grid, member, 15.0, threads=4)
        np.testing.assert_array_equal(serial, pooled)

    def test_largest_arc_wraps_around(self) -> None:
        flags = np.array([True, True, False, False, True, True, True])
        assert polarization_service.largest_arc(flags) == (4, 5)

    def test_symmetry_report(self, disk_grid: Grid) -> None:
        report = polarization_service.symmetry_report(disk_grid, [bump(disk_grid)], resolution_deg=30.0)
        assert len(report.directions) == 8
        assert all(d.holds for d in report.directions)
        assert report.axis.status == "radial"
        assert report.foliated_holds
