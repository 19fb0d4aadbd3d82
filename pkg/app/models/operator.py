"""Assembled discrete energy operator and first eigenpair."""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from app.models.grid import FloatArray, Grid
from app.schemas.kernel import KernelSpec


@dataclass(frozen=True, eq=False)
class EnergyOperator:
    """
    Discrete nonlocal energy on the interior nodes of a grid.

    ``weights[i, j]`` is W(x_i, x_j) (cell volume included), ``kappa[i]`` the
    exterior killing term. The quadratic form is
    1/2 sum W (du)(dv) + sum kappa u v; ``matrix`` is its Gram matrix.
    """

    grid: Grid
    kernel: KernelSpec
    weights: FloatArray
    kappa: FloatArray
    near_weights: dict[int, float] = field(default_factory=dict)
    cutoff_radius: float | None = None
    kappa_quadrature_error: float = 0.0

    @property
    def n(self) -> int:
        return int(self.kappa.size)

    @property
    def cell_volume(self) -> float:
        return self.grid.cell_volume

    @cached_property
    def degree(self) -> FloatArray:
        """Row sums of W, compensated per row."""
        return np.array([math.fsum(row) for row in self.weights], dtype=np.float64)

    @cached_property
    def matrix(self) -> FloatArray:
        """A = diag(rowsum W + kappa) - W."""
        a = -self.weights.copy()
        a[np.diag_indices_from(a)] = self.degree + self.kappa
        return a

    @cached_property
    def scaled_matrix(self) -> FloatArray:
        """A / h^N, the matrix of the operator I."""
        return self.matrix / self.cell_volume


@dataclass(frozen=True, eq=False)
class EigenResult:
    """First Dirichlet eigenpair with phi1 normalized in the h-weighted norm."""

    lambda1: float
    phi1: FloatArray
    iterations: int
    residual: float
    trial_quotients: list[float] = field(default_factory=list)
