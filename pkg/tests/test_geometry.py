"""Tests for grids, half-spaces and reflection pairings."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from app.core.exceptions import DomainError, GridMismatchError
from app.models.grid import Grid, HalfSpace
from app.schemas.geometry import RadialDomain
from app.services.geometry_service import geometry_service
from app.services.polarization_service import polarization_service

coordinate = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)


class TestGrid:
    def test_requires_exactly_one_resolution(self) -> None:
        domain = RadialDomain(shape="ball", r_out=1.0)
        with pytest.raises(DomainError):
            geometry_service.make_grid(domain)
        with pytest.raises(DomainError):
            geometry_service.make_grid(domain, h=0.1, target_nodes=100)

    def test_target_node_count_is_approximated(self) -> None:
        grid = geometry_service.make_grid(RadialDomain(shape="ball", r_out=1.0), target_nodes=300)
        assert abs(grid.n_interior - 300) <= 30

    def test_interior_nodes_lie_in_the_annulus(self, annulus_grid: Grid) -> None:
        radii = np.linalg.norm(annulus_grid.interior_points, axis=1)
        assert np.all(radii > 0.5)
        assert np.all(radii < 1.0)
        np.testing.assert_allclose(annulus_grid.interior_radii, radii, rtol=1e-14)

    def test_extend_restrict(self, disk_grid: Grid, rng: np.random.Generator) -> None:
        u = rng.standard_normal(disk_grid.n_interior)
        full = disk_grid.extend(u)
        assert np.all(full[~disk_grid.inside] == 0.0)
        np.testing.assert_array_equal(disk_grid.restrict(full), u)

    def test_field_shape_checked(self, disk_grid: Grid) -> None:
        with pytest.raises(GridMismatchError):
            disk_grid.check_field(np.zeros(disk_grid.n_interior + 1))

    def test_ball_has_no_inner_radius(self) -> None:
        with pytest.raises(ValidationError):
            RadialDomain(shape="ball", r_in=0.2, r_out=1.0)

    def test_metadata_round_trip(self, disk_grid: Grid) -> None:
        meta = disk_grid.metadata()
        assert meta.n_interior == disk_grid.n_interior
        assert meta.half_extent == 8


class TestHalfSpace:
    def test_normal_must_be_unit(self) -> None:
        with pytest.raises(DomainError):
            HalfSpace(np.array([1.0, 1.0]))

    def test_reflection_is_involution(self, rng: np.random.Generator) -> None:
        e = HalfSpace.from_vector(rng.standard_normal(3))
        x = rng.standard_normal((10, 3))
        np.testing.assert_allclose(e.reflect(e.reflect(x)), x, atol=1e-14)

    @settings(max_examples=50)
    @given(
        x1=st.tuples(coordinate, coordinate),
        x2=st.tuples(coordinate, coordinate),
        phi=st.floats(min_value=0.0, max_value=2.0 * math.pi),
    )
    def test_reflection_gap_identity(self, x1: tuple, x2: tuple, phi: float) -> None:
        e = [math.cos(phi), math.sin(phi)]
        gap, product = geometry_service.reflection_gap(x1, x2, e)
        assert gap == pytest.approx(product, abs=1e-9)

    def test_reflection_gap_is_nonnegative_on_one_side(self) -> None:
        gap, _ = geometry_service.reflection_gap([0.3, 0.4], [0.1, 0.9], [0.0, 1.0])
        assert gap > 0.0

    def test_polar_angle(self) -> None:
        assert geometry_service.polar_angle([0.0, 2.0], [1.0, 0.0]) == pytest.approx(math.pi / 2)
        with pytest.raises(DomainError):
            geometry_service.polar_angle([0.0, 0.0], [1.0, 0.0])

    def test_rotate_direction(self) -> None:
        plane = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        rotated = geometry_service.rotate_direction([1.0, 0.0, 0.0], math.pi / 2, plane)
        np.testing.assert_allclose(rotated, [0.0, 1.0, 0.0], atol=1e-15)
        with pytest.raises(DomainError):
            geometry_service.rotate_direction([0.0, 0.0, 1.0], 0.1, plane)
        with pytest.raises(DomainError):
            geometry_service.rotate_direction([1.0, 0.0, 0.0], 0.1, ([1.0, 0.0, 0.0], [1.0, 1.0, 0.0]))


class TestPairing:
    def test_planar_lattice_directions(self) -> None:
        directions = geometry_service.lattice_directions(2)
        angles = sorted(round(math.degrees(d.angle) % 360.0, 9) for d in directions)
        assert angles == [0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0]
        assert all(geometry_service.is_lattice_compatible(d) for d in directions)

    def test_three_dimensional_direction_count(self) -> None:
        assert len(geometry_service.lattice_directions(3)) == 6 + 12

    def test_exact_pairing_is_an_involution(self, disk_grid: Grid) -> None:
        for e in geometry_service.lattice_directions(2):
            pairing = geometry_service.reflection_pairing(disk_grid, e)
            assert pairing.exact
            assert pairing.mask_symmetric
            perm = pairing.permutation
            np.testing.assert_array_equal(perm[perm], np.arange(disk_grid.n_nodes))

    def test_side_labels(self, disk_grid: Grid) -> None:
        pairing = geometry_service.reflection_pairing(disk_grid, HalfSpace(np.array([1.0, 0.0])))
        x = disk_grid.coords[:, 0]
        np.testing.assert_array_equal(pairing.side, np.sign(x))

    def test_interpolated_pairing_reproduces_linear_fields(self, disk_grid: Grid) -> None:
        e = HalfSpace.from_angle(math.radians(30.0))
        pairing = geometry_service.reflection_pairing(disk_grid, e)
        assert not pairing.exact
        a = np.array([0.7, -0.2])
        u = disk_grid.interior_points @ a + 2.0
        expected = e.reflect(disk_grid.interior_points) @ a + 2.0
        checked = polarization_service.checked_interior(pairing)
        assert checked.any()
        np.testing.assert_allclose(pairing.reflected(u)[checked], expected[checked], atol=1e-12)

    def test_interpolation_bound_vanishes_on_linear_fields(self, disk_grid: Grid) -> None:
        u = disk_grid.interior_points @ np.array([1.0, 3.0])
        assert geometry_service.interpolation_bound(disk_grid, u) < 1e-12

    def test_interpolation_bound_of_quadratic(self, disk_grid: Grid) -> None:
        u = np.sum(disk_grid.interior_points**2, axis=1)
        # second difference of x^2 is 2 h^2 along each axis
        expected = 2.0 / 8.0 * 2.0 * (2.0 * disk_grid.h**2)
        assert geometry_service.interpolation_bound(disk_grid, u) == pytest.approx(expected, rel=1e-9)

    def test_dimension_mismatch(self, disk_grid: Grid) -> None:
        with pytest.raises(DomainError):
            geometry_service.reflection_pairing(disk_grid, HalfSpace(np.array([1.0, 0.0, 0.0])))
