"""Assembly of the discrete nonlocal energy and its quadratic-form calculus."""

import itertools
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray

from app.core.config import settings
from app.core.exceptions import DomainError, GridMismatchError, ResourceLimitError
from app.models.grid import FloatArray, Grid, IntArray
from app.models.operator import EnergyOperator
from app.schemas.energy import OperatorStats
from app.schemas.kernel import KernelSpec
from app.services.kernel_service import kernel_service

logger = structlog.get_logger()

# Pairs with |z|^2 below this use cell quadrature instead of the midpoint rule
NEAR_FIELD_RADIUS_SQ = 4

# Dense arrays of size n^2 alive at peak during assembly and use
DENSE_COPIES = 4


def _gauss_cell(points: int, dim: int) -> tuple[FloatArray, FloatArray]:
    """Tensor Gauss-Legendre rule on [-1/2, 1/2]^dim with weights summing to one."""
    nodes, weights = np.polynomial.legendre.leggauss(points)
    nodes = 0.5 * nodes
    weights = 0.5 * weights
    grid_nodes = np.array(list(itertools.product(nodes, repeat=dim)), dtype=np.float64)
    grid_weights = np.array(
        [math.prod(w) for w in itertools.product(weights, repeat=dim)], dtype=np.float64
    )
    return grid_nodes.reshape(-1, dim), grid_weights


class EnergyService:
    """Service assembling and evaluating discrete nonlocal energies."""

    # ------------------------------------------------------------------
    # Kernel integrals on cells
    # ------------------------------------------------------------------

    def near_field_weights(self, kernel: KernelSpec, h: float, N: int) -> dict[int, float]:
        """
        Second-moment matched weights for singularity-adjacent pairs.

        For integer offsets z with 0 < |z|^2 < 4 every component is in
        {-1, 0, 1}, so cell integrals depend on |z|^2 only. Each weight
        carries the second moment of k over cell(z) divided by |hz|^2; the
        second moment of the self cell is shared among the 2N nearest
        neighbours, so sum W (u(x) - u(y))^2 reproduces the kernel's
        quadratic response to a linear field near the singularity.
        """
        offsets, weights = _gauss_cell(settings.NEAR_FIELD_GAUSS_POINTS, N)
        table: dict[int, float] = {}
        for r2 in range(1, min(NEAR_FIELD_RADIUS_SQ - 1, N) + 1):
            z = np.zeros(N)
            z[:r2] = 1.0
            radii = h * np.linalg.norm(z + offsets, axis=1)
            moment = h**N * float(np.dot(weights, kernel_service.k0_array(kernel, radii) * radii**2))
            table[r2] = h**N * moment / (h * h * r2)
        table[1] += h**N * self.self_cell_moment(kernel, h) / (2 * N * h * h)
        return table

    def self_cell_moment(self, kernel: KernelSpec, h: float) -> float:
        """
        Second moment of the kernel over the self cell [-h/2, h/2]^N.

        In polar form this is the integral over directions of the radial
        moment up to the cube boundary; each of the 2N faces is
        parametrized by its N-1 free coordinates.
        """
        N = kernel.dimension
        half = 0.5 * h
        if N == 1:
            return float(2.0 * kernel_service.radial_moment(kernel, np.array([half]))[0])

        nodes, weights = np.polynomial.legendre.leggauss(settings.FACE_QUADRATURE_POINTS)
        nodes = half * nodes
        weights = half * weights
        face = np.array(list(itertools.product(nodes, repeat=N - 1)), dtype=np.float64)
        face_weights = np.array(
            [math.prod(w) for w in itertools.product(weights, repeat=N - 1)], dtype=np.float64
        )
        radii = np.sqrt(half**2 + np.sum(face**2, axis=1))
        moment = kernel_service.radial_moment(kernel, radii)
        return float(2 * N * np.dot(face_weights, moment * half / radii**N))

    def exterior_kappa(self, kernel: KernelSpec, grid: Grid) -> tuple[FloatArray, float]:
        """
        Kernel mass of the complement of Omega seen from each interior node.

        Evaluated once per distinct integer |z|^2, so nodes related by a
        lattice symmetry receive identical values.

        Returns:
            Per-node masses (without the cell volume) and the quadrature error estimate
        """
        domain = grid.domain
        unique, inverse = np.unique(np.sum(grid.interior_coords**2, axis=1), return_inverse=True)
        radii = grid.h * np.sqrt(unique.astype(np.float64))
        mass, error = kernel_service.ball_exterior_mass(kernel, radii, domain.r_out)
        if domain.shape == "annulus":
            hole, hole_error = kernel_service.ball_interior_mass(kernel, radii, domain.r_in)
            mass = mass + hole
            error = max(error, hole_error)
        return mass[inverse.ravel()], error

    def _weights_from_r2(
        self,
        kernel: KernelSpec,
        h: float,
        r2: IntArray,
        near: dict[int, float],
    ) -> FloatArray:
        """W for integer squared offsets; zero on the diagonal."""
        N = kernel.dimension
        out = np.zeros(r2.shape, dtype=np.float64)
        far = r2 >= NEAR_FIELD_RADIUS_SQ
        out[far] = h ** (2 * N) * kernel_service.k0_array(kernel, h * np.sqrt(r2[far]))
        for key, value in near.items():
            out[r2 == key] = value
        return out

    # ------------------------------------------------------------------
    # Assembly
    # ------------------------------------------------------------------

    def estimate_bytes(self, n: int) -> int:
        return DENSE_COPIES * n * n * 8

    def assemble(
        self,
        kernel: KernelSpec,
        grid: Grid,
        cutoff_radius: float | None = None,
        threads: int | None = None,
    ) -> EnergyOperator:
        """
        Assemble W and kappa for the interior nodes of a grid.

        Args:
            kernel: Validated radial kernel
            grid: Lattice with membership mask
            cutoff_radius: Optional radius beyond which pair weights move into kappa
            threads: Worker threads for row assembly

        Returns:
            Immutable EnergyOperator

        Raises:
            KernelValidationError: If the kernel is unusable
            ResourceLimitError: If the dense operator exceeds MAX_OPERATOR_BYTES
        """
        if kernel.dimension != grid.dimension:
            raise DomainError(
                "Kernel and grid dimensions differ",
                details={"kernel": kernel.dimension, "grid": grid.dimension},
            )
        kernel_service.require_valid(kernel)
        if cutoff_radius is not None and cutoff_radius <= 0.0:
            raise DomainError("Cutoff radius must be positive", details={"cutoff_radius": cutoff_radius})

        n = grid.n_interior
        if n == 0:
            raise DomainError("Domain contains no interior nodes", details={"h": grid.h})
        required = self.estimate_bytes(n)
        if required > settings.MAX_OPERATOR_BYTES:
            raise ResourceLimitError(
                "Dense operator exceeds the memory cap",
                details={"required_bytes": required, "cap_bytes": settings.MAX_OPERATOR_BYTES, "nodes": n},
            )

        h = grid.h
        N = grid.dimension
        near = self.near_field_weights(kernel, h, N)
        exterior, quad_error = self.exterior_kappa(kernel, grid)

        coords = grid.interior_coords
        sq = np.sum(coords * coords, axis=1)
        weights = np.empty((n, n), dtype=np.float64)
        dropped = np.zeros(n, dtype=np.float64)
        limit_sq = math.inf if cutoff_radius is None else (cutoff_radius / h) ** 2

        def fill(rows: IntArray) -> None:
            r2 = sq[rows, None] + sq[None, :] - 2 * (coords[rows] @ coords.T)
            block = self._weights_from_r2(kernel, h, r2, near)
            beyond = r2 > limit_sq
            if beyond.any():
                dropped[rows] = [math.fsum(row) for row in np.where(beyond, block, 0.0)]
                block[beyond] = 0.0
            weights[rows] = block

        workers = threads or settings.THREADS
        chunks = [c for c in np.array_split(np.arange(n), max(1, 4 * workers)) if c.size]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, chunks))

        kappa = h**N * exterior + dropped
        if quad_error > settings.KAPPA_QUAD_RTOL:
            logger.warning("Exterior mass quadrature above tolerance", error=quad_error)

        op = EnergyOperator(
            grid=grid,
            kernel=kernel,
            weights=weights,
            kappa=kappa,
            near_weights=near,
            cutoff_radius=cutoff_radius,
            kappa_quadrature_error=quad_error,
        )
        logger.info(
            "Operator assembled",
            nodes=n,
            h=h,
            kappa_min=float(kappa.min()),
            kappa_max=float(kappa.max()),
            threads=workers,
        )
        return op

    def stats(self, op: EnergyOperator) -> OperatorStats:
        return OperatorStats(
            grid=op.grid.metadata(),
            kernel=op.kernel,
            near_weights=op.near_weights,
            cutoff_radius=op.cutoff_radius,
            weight_max=float(op.weights.max()) if op.n > 1 else 0.0,
            kappa_min=float(op.kappa.min()),
            kappa_max=float(op.kappa.max()),
            kappa_quadrature_error=op.kappa_quadrature_error,
            memory_bytes=self.estimate_bytes(op.n),
        )

    # ------------------------------------------------------------------
    # Quadratic-form calculus
    # ------------------------------------------------------------------

    def _check(self, op: EnergyOperator, u: ArrayLike) -> FloatArray:
        values = np.asarray(u, dtype=np.float64)
        if values.shape != (op.n,):
            raise GridMismatchError(
                "Field does not match the operator's grid",
                details={"expected": op.n, "got": list(values.shape)},
            )
        return values

    def bilinear(self, op: EnergyOperator, u: ArrayLike, v: ArrayLike) -> float:
        """
        E(u, v) = 1/2 sum_{x != y} W (u(x) - u(y)) (v(x) - v(y)) + sum kappa u v.

        Evaluated in difference form; the products are accumulated in
        extended precision (np.longdouble).
        """
        u = self._check(op, u)
        v = self._check(op, v)
        du = u[:, None] - u[None, :]
        dv = du if v is u else v[:, None] - v[None, :]
        pair = np.sum(op.weights * du * dv, dtype=np.longdouble) / 2
        return float(pair + np.sum(op.kappa * u * v, dtype=np.longdouble))

    def energy(self, op: EnergyOperator, u: ArrayLike) -> float:
        """E(u, u) through the Gram matrix; the fast path used inside iterations."""
        u = self._check(op, u)
        return float(u @ (op.matrix @ u))

    def apply(self, op: EnergyOperator, u: ArrayLike) -> FloatArray:
        """Discrete Iu on interior nodes, with <Iu, v>_h = E(u, v)."""
        u = self._check(op, u)
        return op.scaled_matrix @ u

    def inner(self, op: EnergyOperator, u: ArrayLike, v: ArrayLike) -> float:
        """h^N-weighted dot product."""
        return float(op.cell_volume * np.dot(self._check(op, u), self._check(op, v)))

    def norm(self, op: EnergyOperator, u: ArrayLike) -> float:
        return math.sqrt(max(self.inner(op, u, u), 0.0))

    def parts(self, u: ArrayLike) -> tuple[FloatArray, FloatArray]:
        """Split u = u+ - u- into nonnegative parts with disjoint supports."""
        u = np.asarray(u, dtype=np.float64)
        return np.maximum(u, 0.0), np.maximum(-u, 0.0)

    def rho(self, op: EnergyOperator, u_ext: ArrayLike) -> float:
        """
        Discrete rho_k(u, Omega): interactions of Omega nodes with the whole lattice.

        ``u_ext`` is a full-box array (values outside Omega allowed) or an
        interior vector, which is extended by zero. Each node's killing term
        is split between the exterior box nodes and the lattice beyond the box
        in proportion to their kernel masses; the part beyond the box sees
        u = 0. For u supported in Omega this gives
        rho = sum_{x, y in Omega} W (du)^2 + sum kappa u^2.
        """
        grid = op.grid
        values = np.asarray(u_ext, dtype=np.float64)
        if values.shape == (op.n,):
            full = grid.extend(values)
        elif values.shape == (grid.n_nodes,):
            full = values
        else:
            raise GridMismatchError(
                "Extended field does not match the grid",
                details={"interior": op.n, "box": grid.n_nodes, "got": list(values.shape)},
            )

        h = grid.h
        N = grid.dimension
        rows = grid.interior_coords
        cols = grid.coords[~grid.inside]
        r2 = (
            np.sum(rows * rows, axis=1)[:, None]
            + np.sum(cols * cols, axis=1)[None, :]
            - 2 * (rows @ cols.T)
        )
        outside = self._weights_from_r2(op.kernel, h, r2, op.near_weights)
        ux = full[grid.interior]
        uy = full[~grid.inside]

        box_mass = np.array([math.fsum(row) for row in outside], dtype=np.float64)
        box_radius = (grid.half_extent + 0.5) * h
        beyond, _ = kernel_service.ball_exterior_mass(op.kernel, grid.interior_radii, box_radius)
        beyond = h**N * beyond
        total = box_mass + beyond
        share = np.divide(op.kappa, total, out=np.zeros_like(total), where=total > 0.0)

        du = ux[:, None] - ux[None, :]
        inner = np.sum(op.weights * du * du, dtype=np.longdouble)
        cross = np.sum(share[:, None] * outside * (ux[:, None] - uy[None, :]) ** 2, dtype=np.longdouble)
        far = np.sum(ux * ux * share * beyond, dtype=np.longdouble)
        return float(inner + cross + far)

    def submatrix(self, op: EnergyOperator, nodes: ArrayLike) -> FloatArray:
        """
        Gram matrix of the energy restricted to fields supported on a node subset.

        This is the principal submatrix of A: removed nodes act as exterior.
        """
        idx = np.asarray(nodes, dtype=np.int64)
        if idx.size == 0:
            raise DomainError("Node subset is empty")
        if idx.min() < 0 or idx.max() >= op.n:
            raise DomainError("Node subset out of range", details={"n": op.n})
        return op.matrix[np.ix_(idx, idx)]

    def lattice_symmetry(self, op: EnergyOperator, matrix: NDArray[np.int64]) -> NDArray[np.int64]:
        """Interior permutation induced by an integer orthogonal matrix g."""
        grid = op.grid
        image = grid.interior_coords @ np.asarray(matrix, dtype=np.int64).T
        flat = grid.flat_index(image)
        perm = np.where(flat >= 0, grid.position[np.maximum(flat, 0)], -1)
        if np.any(perm < 0):
            raise DomainError("Lattice map does not preserve the domain")
        return perm


energy_service = EnergyService()
