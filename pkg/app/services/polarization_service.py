"""Polarization, foliated Schwarz symmetry and the two-point rearrangement inequalities."""

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple

import numpy as np
import structlog
from numpy.typing import ArrayLike
from scipy.interpolate import RegularGridInterpolator

from app.core.config import settings
from app.core.exceptions import DomainError, PairingError
from app.models.grid import FloatArray, Grid, HalfSpace, ReflectionPairing
from app.models.operator import EnergyOperator
from app.schemas.symmetry import (
    AxisResult,
    EnergyReductionReport,
    FoliatedVerdict,
    PolarizationVerdict,
    ProductNormReport,
    RingProfile,
    SymmetryReport,
)
from app.services.energy_service import energy_service
from app.services.geometry_service import geometry_service

logger = structlog.get_logger()

# Bisection steps when refining the ends of a dominance arc
ARC_REFINE_STEPS = 30


class TwoPointValues(NamedTuple):
    f: FloatArray
    g: FloatArray
    closed_form: FloatArray


class Dominance(NamedTuple):
    """Largest u(sigma x) - u(x) and u(x) - u(sigma x) over checked H-side nodes."""

    forward: float
    reverse: float
    checked: int


class PolarizationService:
    """Service for two-point rearrangements and symmetry detection."""

    # ------------------------------------------------------------------
    # Polarization
    # ------------------------------------------------------------------

    def _polarize_full(self, full: FloatArray, reflected: FloatArray, side: np.ndarray) -> FloatArray:
        upper = np.maximum(full, reflected)
        lower = np.minimum(full, reflected)
        return np.where(side > 0, upper, np.where(side < 0, lower, full))

    def polarize(self, u: ArrayLike, pairing: ReflectionPairing, flip: bool = False) -> FloatArray:
        """
        Two-point rearrangement u_H: larger value on the H side, smaller on the other.

        Args:
            u: Interior field
            pairing: Exact reflection pairing of H
            flip: Polarize with respect to sigma_H(H) instead

        Raises:
            PairingError: If the pairing is interpolated
        """
        if not pairing.exact:
            raise PairingError()
        grid = pairing.grid
        full = grid.extend(u)
        side = -pairing.side if flip else pairing.side
        polarized = self._polarize_full(full, pairing.reflected_full(full), side)
        return grid.restrict(polarized)

    def _checked_mask(self, pairing: ReflectionPairing) -> np.ndarray:
        """H-side nodes to compare; interpolated stencils must lie inside the domain."""
        mask = pairing.side > 0
        if pairing.exact:
            return mask
        assert pairing.stencil_index is not None
        inside = pairing.grid.inside
        corners_ok = np.all(
            (pairing.stencil_index >= 0) & inside[np.maximum(pairing.stencil_index, 0)], axis=1
        )
        return mask & inside & corners_ok

    def checked_interior(self, pairing: ReflectionPairing) -> np.ndarray:
        """The checked mask restricted to interior nodes."""
        return self._checked_mask(pairing)[pairing.grid.interior]

    def dominance(self, full: FloatArray, pairing: ReflectionPairing) -> Dominance:
        mask = self._checked_mask(pairing)
        if not np.any(mask):
            return Dominance(0.0, 0.0, 0)
        diff = pairing.reflected_full(full)[mask] - full[mask]
        return Dominance(
            forward=max(float(diff.max()), 0.0),
            reverse=max(float(-diff.min()), 0.0),
            checked=int(mask.sum()),
        )

    def is_polarized(
        self,
        u: ArrayLike,
        pairing: ReflectionPairing,
        tol: float | None = None,
        bound: float | None = None,
    ) -> PolarizationVerdict:
        """
        Check u(x) >= u(sigma x) - tol on the H side.

        For interpolated directions only nodes with fully interior stencils are
        compared and the interpolation bound is added to the tolerance.
        """
        tol = settings.SYMMETRY_TOL if tol is None else tol
        grid = pairing.grid
        full = grid.extend(u)
        if pairing.exact:
            bound = 0.0
        elif bound is None:
            bound = geometry_service.interpolation_bound(grid, u)
        result = self.dominance(full, pairing)
        normal = pairing.halfspace.normal
        return PolarizationVerdict(
            normal=normal.tolist(),
            angle_deg=math.degrees(pairing.halfspace.angle) if normal.size == 2 else None,
            exact=pairing.exact,
            holds=result.forward <= tol + bound,
            max_violation=result.forward,
            interpolation_bound=bound,
            checked_nodes=result.checked,
        )

    # ------------------------------------------------------------------
    # Inequalities
    # ------------------------------------------------------------------

    def two_point_identity(
        self, u1: ArrayLike, u1_mirror: ArrayLike, u2: ArrayLike, u2_mirror: ArrayLike
    ) -> TwoPointValues:
        """
        The functions f and g of the two-point identity at x1, x2 in H.

        Inputs are u(x_j) and u(sigma x_j). ``closed_form`` is
        2 |eta1 eta2| - 2 eta1 eta2 with eta_j = (u(x_j) - u(sigma x_j)) / 2.
        """
        a1, b1 = np.asarray(u1, dtype=np.float64), np.asarray(u1_mirror, dtype=np.float64)
        a2, b2 = np.asarray(u2, dtype=np.float64), np.asarray(u2_mirror, dtype=np.float64)
        hi1, lo1 = np.maximum(a1, b1), np.minimum(a1, b1)
        hi2, lo2 = np.maximum(a2, b2), np.minimum(a2, b2)
        f = hi1 * hi2 + lo1 * lo2 - a1 * a2 - b1 * b2
        g = hi1 * lo2 + lo1 * hi2 - a1 * b2 - b1 * a2
        eta1 = 0.5 * (a1 - b1)
        eta2 = 0.5 * (a2 - b2)
        return TwoPointValues(f=f, g=g, closed_form=2.0 * np.abs(eta1 * eta2) - 2.0 * eta1 * eta2)

    def _require_symmetric(self, pairing: ReflectionPairing) -> None:
        if not pairing.exact:
            raise PairingError()
        if not pairing.mask_symmetric:
            raise DomainError(
                "Domain mask is not symmetric with respect to the hyperplane",
                details={"normal": pairing.halfspace.normal.tolist()},
            )

    def energy_reduction_check(
        self, op: EnergyOperator, u: ArrayLike, pairing: ReflectionPairing
    ) -> EnergyReductionReport:
        """
        Compare E(u_H, u_H) with E(u, u) and classify the equality case.

        Returns:
            EnergyReductionReport; the class is set only when equality holds
        """
        self._require_symmetric(pairing)
        u = np.asarray(u, dtype=np.float64)
        polarized = self.polarize(u, pairing)
        energy = energy_service.energy(op, u)
        energy_h = energy_service.energy(op, polarized)
        scale = max(abs(energy), abs(energy_h), np.finfo(float).tiny)

        equality = abs(energy - energy_h) <= settings.EQUALITY_RTOL * scale
        classification = None
        if equality:
            atol = 1e-12 * max(float(np.max(np.abs(u))) if u.size else 0.0, np.finfo(float).tiny)
            if np.allclose(u, polarized, rtol=0.0, atol=atol):
                classification = "u = u_H"
            elif np.allclose(u, self.polarize(u, pairing, flip=True), rtol=0.0, atol=atol):
                classification = "u = u_{σ_H(H)}"
            else:
                classification = "neither"

        return EnergyReductionReport(
            energy=energy,
            energy_polarized=energy_h,
            holds=energy_h <= energy + 1e-10 * scale,
            equality=equality,
            classification=classification,
            dichotomy_asserted=op.kernel.strictly_decreasing and op.cutoff_radius is None,
        )

    def product_norm_check(
        self, u: ArrayLike, v: ArrayLike, pairing: ReflectionPairing, q: float
    ) -> ProductNormReport:
        """
        Compare ||u_H v_H||_q with ||uv||_q for nonnegative fields.

        Equality holds iff (u - u o sigma)(v - v o sigma) >= 0 on the H side.
        """
        self._require_symmetric(pairing)
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if np.any(u < 0.0) or np.any(v < 0.0):
            raise DomainError("Product norm check requires nonnegative fields")
        if q < 1.0:
            raise DomainError("Exponent q must be at least 1", details={"q": q})

        grid = pairing.grid
        volume = grid.cell_volume
        norm = (volume * float(np.sum((u * v) ** q))) ** (1.0 / q)
        uh = self.polarize(u, pairing)
        vh = self.polarize(v, pairing)
        norm_h = (volume * float(np.sum((uh * vh) ** q))) ** (1.0 / q)

        full_u, full_v = grid.extend(u), grid.extend(v)
        h_side = pairing.side > 0
        swing = (full_u - pairing.reflected_full(full_u)) * (full_v - pairing.reflected_full(full_v))
        condition = bool(np.all(swing[h_side] >= 0.0))

        scale = max(norm, np.finfo(float).tiny)
        return ProductNormReport(
            norm=norm,
            norm_polarized=norm_h,
            holds=norm_h >= norm * (1.0 - 1e-12),
            equality=abs(norm_h - norm) <= settings.EQUALITY_RTOL * scale,
            condition=condition,
        )

    # ------------------------------------------------------------------
    # Foliated Schwarz symmetry
    # ------------------------------------------------------------------

    def ring_radii(self, grid: Grid) -> list[float]:
        """Radii 2hk whose interpolation stencils stay inside the domain."""
        reach = grid.h * math.sqrt(grid.dimension)
        domain = grid.domain
        radii = []
        k = 1
        while 2.0 * grid.h * k + reach < domain.r_out:
            rho = 2.0 * grid.h * k
            if rho - reach > domain.r_in:
                radii.append(rho)
            k += 1
        return radii

    def foliated_schwarz_check(
        self,
        grid: Grid,
        u: ArrayLike,
        p: ArrayLike,
        tol: float | None = None,
        field_index: int = 0,
    ) -> FoliatedVerdict:
        """
        Check that u is nonincreasing in the polar angle from p on every ring.

        Each ring is sampled at RING_SAMPLES angles by bilinear interpolation;
        both half-profiles from theta = 0 to pi must be nonincreasing up to
        tol plus twice the interpolation bound.
        """
        if grid.dimension != 2:
            raise DomainError("Foliated Schwarz check supports N = 2 only")
        tol = settings.SYMMETRY_TOL if tol is None else tol
        axis = np.asarray(p, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)

        values = grid.extend(u)
        bound = geometry_service.interpolation_bound(grid, u)
        threshold = tol + 2.0 * bound
        ticks = grid.h * np.arange(-grid.half_extent, grid.half_extent + 1)
        interpolator = RegularGridInterpolator((ticks, ticks), values.reshape(grid.shape), method="linear")

        samples = settings.RING_SAMPLES
        half = samples // 2
        theta = 2.0 * math.pi * np.arange(samples) / samples
        base = math.atan2(axis[1], axis[0])
        rings: list[RingProfile] = []
        for rho in self.ring_radii(grid):
            points = rho * np.column_stack((np.cos(base + theta), np.sin(base + theta)))
            profile = interpolator(points)
            forward = profile[: half + 1]
            backward = np.concatenate((profile[:1], profile[: half - 1 : -1]))
            residual = max(0.0, float(np.max(np.diff(forward))), float(np.max(np.diff(backward))))
            rings.append(
                RingProfile(
                    radius=rho,
                    residual=residual,
                    passed=residual <= threshold,
                    angles=theta[: half + 1].tolist(),
                    values=forward.tolist(),
                )
            )

        return FoliatedVerdict(
            field_index=field_index,
            axis=axis.tolist(),
            holds=all(r.passed for r in rings),
            tolerance=threshold,
            interpolation_bound=bound,
            rings=rings,
        )

    # ------------------------------------------------------------------
    # Angular sweeps
    # ------------------------------------------------------------------

    def sweep(
        self,
        grid: Grid,
        member: Callable[[float], bool],
        resolution_deg: float | None = None,
        threads: int | None = None,
    ) -> tuple[FloatArray, np.ndarray]:
        """Evaluate a direction predicate on angles 0, res, 2 res, ... (degrees)."""
        if grid.dimension != 2:
            raise DomainError("Angular sweeps support N = 2 only")
        resolution = resolution_deg or settings.SWEEP_RESOLUTION_DEG
        count = int(round(360.0 / resolution))
        angles = resolution * np.arange(count)
        with ThreadPoolExecutor(max_workers=threads or settings.THREADS) as pool:
            flags = np.array(list(pool.map(member, angles.tolist())), dtype=bool)
        return angles, flags

    def dominance_member(
        self, grid: Grid, fields: Sequence[FloatArray], tol: float
    ) -> Callable[[float], bool]:
        """Predicate: every field is polarized with respect to the direction at angle phi (deg)."""
        fulls = [grid.extend(u) for u in fields]
        bounds = [geometry_service.interpolation_bound(grid, u) for u in fields]

        def member(angle_deg: float) -> bool:
            pairing = geometry_service.reflection_pairing(
                grid, HalfSpace.from_angle(math.radians(angle_deg))
            )
            slack = [0.0] * len(fields) if pairing.exact else bounds
            return all(
                self.dominance(full, pairing).forward <= tol + b for full, b in zip(fulls, slack)
            )

        return member

    def largest_arc(self, flags: np.ndarray) -> tuple[int, int]:
        """Start index and length of the longest circular run of True."""
        count = flags.size
        start_scan = int(np.flatnonzero(~flags)[0])
        best_start, best_len, run_start, run_len = 0, 0, 0, 0
        for offset in range(1, count + 1):
            idx = (start_scan + offset) % count
            if flags[idx]:
                if run_len == 0:
                    run_start = idx
                run_len += 1
                if run_len > best_len:
                    best_start, best_len = run_start, run_len
            else:
                run_len = 0
        return best_start, best_len

    def endpoint_tolerance(self, resolution_deg: float) -> float:
        """Relative asymmetry allowed at arc endpoints: a field turned by one sweep step moves this much."""
        return settings.ENDPOINT_SYMMETRY_FACTOR * math.radians(resolution_deg)

    def refine_edge(self, member: Callable[[float], bool], inside: float, outside: float) -> float:
        for _ in range(ARC_REFINE_STEPS):
            mid = 0.5 * (inside + outside)
            if member(mid):
                inside = mid
            else:
                outside = mid
        return inside

    def dominance_arc(
        self,
        grid: Grid,
        fields: Sequence[FloatArray],
        tol: float | None = None,
        resolution_deg: float | None = None,
        threads: int | None = None,
    ) -> AxisResult:
        """
        Locate the set M of directions dominating all fields and its midpoint axis.

        A full circle is reported "radial" with the first sweep direction;
        an empty set "none"; a single-sample arc "inconclusive". Otherwise the
        largest arc is refined by bisection and accepted as an axis only if
        every field is reflection-symmetric at both ends.
        """
        tol = settings.SYMMETRY_TOL if tol is None else tol
        resolution = resolution_deg or settings.SWEEP_RESOLUTION_DEG
        fields = [np.asarray(u, dtype=np.float64) for u in fields]
        member = self.dominance_member(grid, fields, tol)
        angles, flags = self.sweep(grid, member, resolution, threads)
        count = int(flags.size)
        members = int(flags.sum())

        if members == count:
            return AxisResult(
                status="radial",
                axis=[1.0, 0.0],
                axis_angle_deg=0.0,
                arc_deg=(0.0, 360.0),
                members=members,
                sweep_size=count,
                resolution_deg=resolution,
            )
        if members == 0:
            return AxisResult(status="none", members=0, sweep_size=count, resolution_deg=resolution)

        start, length = self.largest_arc(flags)
        first = float(angles[start])
        last = first + resolution * (length - 1)
        if length == 1:
            return AxisResult(
                status="inconclusive",
                arc_deg=(first, first),
                members=members,
                sweep_size=count,
                resolution_deg=resolution,
            )

        phi_minus = self.refine_edge(member, first, first - resolution)
        phi_plus = self.refine_edge(member, last, last + resolution)

        asymmetry = []
        for u in fields:
            scale = max(float(np.max(np.abs(u))), np.finfo(float).tiny)
            bound = geometry_service.interpolation_bound(grid, u)
            worst = 0.0
            for phi in (phi_minus, phi_plus):
                pairing = geometry_service.reflection_pairing(
                    grid, HalfSpace.from_angle(math.radians(phi))
                )
                slack = 0.0 if pairing.exact else bound
                reverse = self.dominance(grid.extend(u), pairing).reverse
                worst = max(worst, max(reverse - slack, 0.0) / scale)
            asymmetry.append(worst)

        mid = 0.5 * (phi_minus + phi_plus)
        endpoint_tol = self.endpoint_tolerance(resolution)
        symmetric_ends = all(a <= endpoint_tol for a in asymmetry)
        direction = [math.cos(math.radians(mid)), math.sin(math.radians(mid))]
        logger.debug(
            "Dominance arc located",
            phi_minus=phi_minus,
            phi_plus=phi_plus,
            members=members,
            symmetric_ends=symmetric_ends,
        )
        return AxisResult(
            status="axis" if symmetric_ends else "none",
            axis=direction if symmetric_ends else None,
            axis_angle_deg=(mid % 360.0) if symmetric_ends else None,
            arc_deg=(phi_minus, phi_plus),
            members=members,
            sweep_size=count,
            resolution_deg=resolution,
            endpoint_asymmetry=asymmetry,
            endpoint_tolerance=endpoint_tol,
        )

    def find_axis(
        self,
        grid: Grid,
        fields: Sequence[ArrayLike],
        tol: float | None = None,
        resolution_deg: float | None = None,
        threads: int | None = None,
    ) -> AxisResult:
        """Axis p common to all fields, "radial", "none" or "inconclusive"."""
        return self.dominance_arc(
            grid, [np.asarray(u, dtype=np.float64) for u in fields], tol, resolution_deg, threads
        )

    def symmetry_report(
        self,
        grid: Grid,
        fields: Sequence[ArrayLike],
        tol: float | None = None,
        resolution_deg: float | None = None,
        threads: int | None = None,
    ) -> SymmetryReport:
        """Exact-direction verdicts, detected axis and foliated Schwarz verdicts."""
        tol = settings.SYMMETRY_TOL if tol is None else tol
        arrays = [np.asarray(u, dtype=np.float64) for u in fields]

        directions = []
        for halfspace in geometry_service.lattice_directions(grid.dimension):
            pairing = geometry_service.reflection_pairing(grid, halfspace)
            verdicts = [self.is_polarized(u, pairing, tol) for u in arrays]
            worst = max(verdicts, key=lambda v: v.max_violation)
            directions.append(
                worst.model_copy(update={"holds": all(v.holds for v in verdicts)})
            )

        if grid.dimension != 2:
            return SymmetryReport(
                directions=directions,
                axis=AxisResult(status="inconclusive", resolution_deg=0.0),
            )

        axis = self.find_axis(grid, arrays, tol, resolution_deg, threads)
        foliated = []
        if axis.axis is not None:
            foliated = [
                self.foliated_schwarz_check(grid, u, axis.axis, tol, field_index=i)
                for i, u in enumerate(arrays)
            ]
        report = SymmetryReport(directions=directions, axis=axis, foliated=foliated)
        logger.info(
            "Symmetry report built",
            status=axis.status,
            axis=axis.axis,
            foliated=report.foliated_holds,
        )
        return report


polarization_service = PolarizationService()
