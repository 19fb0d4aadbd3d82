"""Grids, reflections, rotations and polar angles on radial domains."""

import itertools
import math

import numpy as np
import structlog
from numpy.typing import ArrayLike

from app.core.exceptions import DomainError
from app.models.grid import FloatArray, Grid, HalfSpace, IntArray, ReflectionPairing
from app.schemas.geometry import RadialDomain

logger = structlog.get_logger()

# Entries of I - 2 e e^T within this distance of an integer count as integral
LATTICE_TOL = 1e-9
SPAN_TOL = 1e-9


class GeometryService:
    """Service for lattices and the reflection group acting on them."""

    def make_grid(
        self,
        domain: RadialDomain,
        h: float | None = None,
        target_nodes: int | None = None,
    ) -> Grid:
        """
        Build the node-centred lattice covering a radial domain.

        Args:
            domain: Ball or annulus
            h: Lattice spacing; mutually exclusive with target_nodes
            target_nodes: Desired interior node count; h is chosen to match it

        Returns:
            Grid with half-extent M = ceil(R_out / h)
        """
        if (h is None) == (target_nodes is None):
            raise DomainError("Specify exactly one of h and target_nodes")
        if h is None:
            assert target_nodes is not None
            h = self._spacing_for(domain, target_nodes)
        if not h > 0.0:
            raise DomainError("Grid spacing must be positive", details={"h": h})

        M = max(1, math.ceil(domain.r_out / h - 1e-12))
        N = domain.dimension
        coords = (np.indices((2 * M + 1,) * N).reshape(N, -1).T - M).astype(np.int64)
        # integer |z|^2 keeps membership exactly invariant under lattice symmetries
        radius_sq = (h * h) * np.sum(coords * coords, axis=1).astype(np.float64)
        inside = domain.contains_squared(radius_sq)

        grid = Grid(domain=domain, h=float(h), half_extent=M, coords=coords, inside=inside)
        logger.debug("Grid built", h=h, half_extent=M, interior=grid.n_interior)
        return grid

    def _count_nodes(self, domain: RadialDomain, h: float) -> int:
        M = max(1, math.ceil(domain.r_out / h - 1e-12))
        axis = np.arange(-M, M + 1)
        mesh = np.meshgrid(*([axis] * domain.dimension), indexing="ij")
        radius_sq = (h * h) * sum(m.astype(np.float64) ** 2 for m in mesh)
        return int(np.count_nonzero(domain.contains_squared(radius_sq)))

    def _spacing_for(self, domain: RadialDomain, target_nodes: int) -> float:
        if target_nodes < 1:
            raise DomainError("target_nodes must be positive", details={"target_nodes": target_nodes})
        guess = (domain.volume / target_nodes) ** (1.0 / domain.dimension)
        candidates = guess * np.geomspace(0.8, 1.25, 91)
        counts = np.array([self._count_nodes(domain, float(c)) for c in candidates])
        best = int(np.argmin(np.abs(counts - target_nodes)))
        return float(candidates[best])

    # ------------------------------------------------------------------
    # Points and directions
    # ------------------------------------------------------------------

    def reflect(self, x: ArrayLike, e: ArrayLike) -> FloatArray:
        """sigma_e(x) = x - 2 (x . e) e."""
        return HalfSpace(np.asarray(e, dtype=np.float64)).reflect(x)

    def reflection_gap(self, x1: ArrayLike, x2: ArrayLike, e: ArrayLike) -> tuple[float, float]:
        """
        Compare |x1 - sigma(x2)|^2 - |x1 - x2|^2 with 4 d1 d2.

        Returns:
            (squared-distance difference, 4 d1 d2) with d_i = x_i . e
        """
        x1 = np.asarray(x1, dtype=np.float64)
        x2 = np.asarray(x2, dtype=np.float64)
        halfspace = HalfSpace(np.asarray(e, dtype=np.float64))
        mirrored = halfspace.reflect(x2)
        gap = float(np.sum((x1 - mirrored) ** 2) - np.sum((x1 - x2) ** 2))
        d1 = float(x1 @ halfspace.normal)
        d2 = float(x2 @ halfspace.normal)
        return gap, 4.0 * d1 * d2

    def polar_angle(self, x: ArrayLike, p: ArrayLike) -> float:
        """Angle between x and the unit vector p, in [0, pi]."""
        x = np.asarray(x, dtype=np.float64)
        norm = float(np.linalg.norm(x))
        if norm == 0.0:
            raise DomainError("Polar angle undefined at the origin")
        cosine = float(x @ np.asarray(p, dtype=np.float64)) / norm
        return math.acos(min(1.0, max(-1.0, cosine)))

    def rotate_direction(
        self, e0: ArrayLike, phi: float, plane: tuple[ArrayLike, ArrayLike]
    ) -> FloatArray:
        """
        Rotate e0 by phi inside the 2-plane spanned by an orthonormal pair (a, b).

        Raises:
            DomainError: If the pair is not orthonormal or e0 leaves its span
        """
        e0 = np.asarray(e0, dtype=np.float64)
        a = np.asarray(plane[0], dtype=np.float64)
        b = np.asarray(plane[1], dtype=np.float64)
        gram = np.array([[a @ a, a @ b], [a @ b, b @ b]])
        if not np.allclose(gram, np.eye(2), atol=SPAN_TOL):
            raise DomainError("Rotation plane must be an orthonormal pair")
        alpha = float(e0 @ a)
        beta = float(e0 @ b)
        if np.linalg.norm(e0 - alpha * a - beta * b) > SPAN_TOL:
            raise DomainError("Direction is not in the rotation plane")
        c, s = math.cos(phi), math.sin(phi)
        return (alpha * c - beta * s) * a + (alpha * s + beta * c) * b

    def lattice_directions(self, N: int) -> list[HalfSpace]:
        """
        Normals whose reflections map the lattice onto itself.

        These are +-e_i and (+-e_i +- e_j)/sqrt(2); eight directions at
        multiples of 45 degrees when N = 2.
        """
        if N < 1:
            raise DomainError("Dimension must be at least 1")
        vectors: list[FloatArray] = []
        for i in range(N):
            for sign in (1.0, -1.0):
                v = np.zeros(N)
                v[i] = sign
                vectors.append(v)
        for i, j in itertools.combinations(range(N), 2):
            for si, sj in itertools.product((1.0, -1.0), repeat=2):
                v = np.zeros(N)
                v[i], v[j] = si, sj
                vectors.append(v / math.sqrt(2.0))
        directions = [HalfSpace(v) for v in vectors]
        if N == 2:
            directions.sort(key=lambda d: d.angle % (2.0 * math.pi))
        return directions

    # ------------------------------------------------------------------
    # Pairings
    # ------------------------------------------------------------------

    def reflection_matrix(self, e: HalfSpace) -> FloatArray:
        return np.eye(e.dimension) - 2.0 * np.outer(e.normal, e.normal)

    def is_lattice_compatible(self, e: HalfSpace) -> bool:
        matrix = self.reflection_matrix(e)
        return bool(np.all(np.abs(matrix - np.rint(matrix)) <= LATTICE_TOL))

    def reflection_pairing(self, grid: Grid, e: HalfSpace) -> ReflectionPairing:
        """
        Realize sigma_e on the grid.

        Lattice-compatible normals yield an exact node permutation; any other
        normal yields multilinear interpolation stencils at sigma_e(node).
        """
        if e.dimension != grid.dimension:
            raise DomainError(
                "Normal dimension does not match the grid",
                details={"normal": e.dimension, "grid": grid.dimension},
            )

        if self.is_lattice_compatible(e):
            matrix = np.rint(self.reflection_matrix(e)).astype(np.int64)
            image = grid.coords @ matrix.T
            permutation = grid.flat_index(image)
            fixed = permutation == np.arange(grid.n_nodes)
            dots = grid.coords.astype(np.float64) @ e.normal
            side = np.where(fixed, 0, np.where(dots > 0.0, 1, -1)).astype(np.int8)
            return ReflectionPairing(
                grid=grid, halfspace=e, exact=True, side=side, permutation=permutation
            )

        index, weight = self._stencils(grid, e)
        dots = grid.coords.astype(np.float64) @ e.normal
        side = np.where(np.abs(dots) <= 1e-12, 0, np.sign(dots)).astype(np.int8)
        return ReflectionPairing(
            grid=grid,
            halfspace=e,
            exact=False,
            side=side,
            stencil_index=index,
            stencil_weight=weight,
        )

    def _stencils(self, grid: Grid, e: HalfSpace) -> tuple[IntArray, FloatArray]:
        """Multilinear stencils of sigma_e(z) in lattice units."""
        N = grid.dimension
        image = e.reflect(grid.coords.astype(np.float64))
        base = np.floor(image)
        frac = image - base
        base_int = base.astype(np.int64)

        corners = np.array(list(itertools.product((0, 1), repeat=N)), dtype=np.int64)
        index = np.empty((grid.n_nodes, corners.shape[0]), dtype=np.int64)
        weight = np.empty((grid.n_nodes, corners.shape[0]), dtype=np.float64)
        for k, corner in enumerate(corners):
            index[:, k] = grid.flat_index(base_int + corner)
            weight[:, k] = np.prod(np.where(corner == 1, frac, 1.0 - frac), axis=1)
        return index, weight

    # ------------------------------------------------------------------
    # Interpolation error
    # ------------------------------------------------------------------

    def interpolation_bound(self, grid: Grid, u: ArrayLike) -> float:
        """
        A-priori multilinear interpolation error from discrete second differences.

        Uses (N / 8) * sum_i max |Delta_i^2 u| over nodes whose three-point
        stencil along axis i lies in the domain.
        """
        full = grid.extend(u).reshape(grid.shape)
        inside = grid.inside.reshape(grid.shape)
        total = 0.0
        for axis in range(grid.dimension):
            lo = [slice(None)] * grid.dimension
            mid = [slice(None)] * grid.dimension
            hi = [slice(None)] * grid.dimension
            lo[axis], mid[axis], hi[axis] = slice(0, -2), slice(1, -1), slice(2, None)
            second = full[tuple(hi)] - 2.0 * full[tuple(mid)] + full[tuple(lo)]
            valid = inside[tuple(hi)] & inside[tuple(mid)] & inside[tuple(lo)]
            if np.any(valid):
                total += float(np.max(np.abs(second[valid])))
        return grid.dimension / 8.0 * total


geometry_service = GeometryService()
