"""Lattice, half-space and reflection-pairing data structures."""

from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.core.exceptions import DomainError, GridMismatchError
from app.schemas.geometry import GridMetadata, RadialDomain

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]
BoolArray = NDArray[np.bool_]

UNIT_NORM_TOL = 1e-12

FieldFunction = Callable[[FloatArray], ArrayLike]


@dataclass(frozen=True, eq=False)
class Grid:
    """
    Node-centred lattice x = h z, |z_i| <= M, with a membership mask.

    Nodes are ordered lexicographically (C order over z + M). Fields are
    vectors over the interior nodes; ``extend``/``restrict`` move between
    interior vectors and full-box arrays.
    """

    domain: RadialDomain
    h: float
    half_extent: int
    coords: IntArray
    inside: BoolArray

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.half_extent + 1,) * self.dimension

    @property
    def n_nodes(self) -> int:
        return int(self.coords.shape[0])

    @cached_property
    def interior(self) -> IntArray:
        """Flat indices of interior nodes, ascending."""
        return np.flatnonzero(self.inside).astype(np.int64)

    @property
    def n_interior(self) -> int:
        return int(self.interior.size)

    @cached_property
    def position(self) -> IntArray:
        """Map full index -> interior position, -1 outside the domain."""
        pos = np.full(self.n_nodes, -1, dtype=np.int64)
        pos[self.interior] = np.arange(self.n_interior, dtype=np.int64)
        return pos

    @cached_property
    def interior_coords(self) -> IntArray:
        return self.coords[self.interior]

    @cached_property
    def interior_points(self) -> FloatArray:
        return self.h * self.interior_coords.astype(np.float64)

    @cached_property
    def interior_radii(self) -> FloatArray:
        # from integer |z|^2 so radial data are exactly lattice-invariant
        sq = np.sum(self.interior_coords * self.interior_coords, axis=1)
        return self.h * np.sqrt(sq.astype(np.float64))

    @property
    def cell_volume(self) -> float:
        return float(self.h**self.dimension)

    def flat_index(self, z: ArrayLike) -> IntArray:
        """Flat index of lattice coordinates, -1 for nodes outside the box."""
        z = np.asarray(z, dtype=np.int64)
        shifted = z + self.half_extent
        in_box = np.all((shifted >= 0) & (shifted < 2 * self.half_extent + 1), axis=-1)
        clipped = np.clip(shifted, 0, 2 * self.half_extent)
        flat = np.ravel_multi_index(tuple(np.moveaxis(clipped, -1, 0)), self.shape)
        return np.where(in_box, flat, -1).astype(np.int64)

    def extend(self, u: ArrayLike) -> FloatArray:
        """Interior vector -> full-box array, zero outside the domain."""
        values = self.check_field(u)
        full = np.zeros(self.n_nodes, dtype=np.float64)
        full[self.interior] = values
        return full

    def restrict(self, full: ArrayLike) -> FloatArray:
        """Full-box array -> interior vector."""
        values = np.asarray(full, dtype=np.float64)
        if values.shape != (self.n_nodes,):
            raise GridMismatchError(
                "Full array does not match the grid box",
                details={"expected": self.n_nodes, "got": list(values.shape)},
            )
        return values[self.interior].copy()

    def check_field(self, u: ArrayLike) -> FloatArray:
        """Return u as a float vector over interior nodes or raise GridMismatchError."""
        values = np.asarray(u, dtype=np.float64)
        if values.shape != (self.n_interior,):
            raise GridMismatchError(
                "Field does not match the grid's interior nodes",
                details={"expected": self.n_interior, "got": list(values.shape)},
            )
        return values

    def field_from_function(self, func: FieldFunction) -> FloatArray:
        """Sample a function of the interior points, shape (n, N) -> (n,)."""
        return np.asarray(func(self.interior_points), dtype=np.float64)

    def same_as(self, other: "Grid") -> bool:
        return (
            other is self
            or (
                self.half_extent == other.half_extent
                and self.h == other.h
                and self.domain == other.domain
                and np.array_equal(self.inside, other.inside)
            )
        )

    def metadata(self) -> GridMetadata:
        return GridMetadata(
            domain=self.domain,
            h=self.h,
            half_extent=self.half_extent,
            n_nodes=self.n_nodes,
            n_interior=self.n_interior,
        )


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """Open half-space H_e = {x : x . e > 0} through the origin."""

    normal: FloatArray

    def __post_init__(self) -> None:
        normal = np.asarray(self.normal, dtype=np.float64)
        if normal.ndim != 1 or abs(float(np.linalg.norm(normal)) - 1.0) > UNIT_NORM_TOL:
            raise DomainError(
                "Half-space normal must be a unit vector",
                details={"normal": normal.tolist()},
            )
        object.__setattr__(self, "normal", normal)

    @classmethod
    def from_vector(cls, v: ArrayLike) -> "HalfSpace":
        """Normalize a nonzero vector into a half-space normal."""
        v = np.asarray(v, dtype=np.float64)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise DomainError("Zero vector has no direction")
        return cls(v / norm)

    @classmethod
    def from_angle(cls, phi: float) -> "HalfSpace":
        """Planar normal (cos phi, sin phi)."""
        return cls(np.array([np.cos(phi), np.sin(phi)]))

    @property
    def dimension(self) -> int:
        return int(self.normal.size)

    @property
    def angle(self) -> float:
        """Polar angle of a planar normal in (-pi, pi]."""
        return float(np.arctan2(self.normal[1], self.normal[0]))

    def flipped(self) -> "HalfSpace":
        """The complementary half-space sigma_H(H)."""
        return HalfSpace(-self.normal)

    def reflect(self, x: ArrayLike) -> FloatArray:
        """sigma_e(x) = x - 2 (x . e) e, row-wise for point arrays."""
        x = np.asarray(x, dtype=np.float64)
        return x - 2.0 * np.multiply.outer(x @ self.normal, self.normal)


@dataclass(frozen=True, eq=False)
class ReflectionPairing:
    """
    Discrete realization of sigma_e on a grid.

    ``side`` is +1 on H, 0 on the hyperplane and -1 on the complement, per
    full-box node. Exact pairings carry a node permutation; approximate ones
    carry multilinear stencils (2^N corners, index -1 outside the box).
    """

    grid: Grid
    halfspace: HalfSpace
    exact: bool
    side: NDArray[np.int8]
    permutation: IntArray | None = None
    stencil_index: IntArray | None = None
    stencil_weight: FloatArray | None = None

    @property
    def order(self) -> int:
        """0 for exact permutations, 1 for multilinear stencils."""
        return 0 if self.exact else 1

    def reflected_full(self, full: FloatArray) -> FloatArray:
        """Values u(sigma x) at every box node from full-box values u."""
        if self.exact:
            assert self.permutation is not None
            return full[self.permutation]
        assert self.stencil_index is not None and self.stencil_weight is not None
        gathered = np.where(self.stencil_index >= 0, full[np.maximum(self.stencil_index, 0)], 0.0)
        return np.sum(gathered * self.stencil_weight, axis=1)

    def reflected(self, u: FloatArray) -> FloatArray:
        """u o sigma restricted to interior nodes."""
        return self.grid.restrict(self.reflected_full(self.grid.extend(u)))

    @cached_property
    def interior_side(self) -> NDArray[np.int8]:
        return self.side[self.grid.interior]

    @cached_property
    def mask_symmetric(self) -> bool:
        """Whether sigma maps the membership mask onto itself."""
        if not self.exact:
            return False
        assert self.permutation is not None
        return bool(np.array_equal(self.grid.inside[self.permutation], self.grid.inside))
