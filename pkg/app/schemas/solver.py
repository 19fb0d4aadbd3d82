"""Pydantic schemas for the coupled system, its solver and coupling diagnostics."""

from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import Field, field_validator

from app.schemas.base import BaseSchema, ReportSchema
from app.schemas.symmetry import SymmetryReport


class RadialProfile(BaseSchema):
    """Piecewise-linear radial profile a(r), constant beyond its first and last knots."""

    knots: list[tuple[float, float]] = Field(..., min_length=1, description="(r, value) pairs")

    @field_validator("knots")
    @classmethod
    def validate_knots(cls, v: list[tuple[float, float]]) -> list[tuple[float, float]]:
        radii = [r for r, _ in v]
        if any(r < 0.0 for r in radii):
            raise ValueError("Profile radii must be nonnegative")
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("Profile radii must be strictly increasing")
        return v

    @classmethod
    def constant(cls, value: float) -> "RadialProfile":
        return cls(knots=[(0.0, float(value))])

    @classmethod
    def parse(cls, text: str) -> "RadialProfile":
        """Parse "0.3" or "0:0.0, 0.5:1.0" (radius:value pairs)."""
        text = text.strip()
        if ":" not in text:
            return cls.constant(float(text))
        knots = []
        for item in text.split(","):
            r, value = item.split(":")
            knots.append((float(r), float(value)))
        return cls(knots=knots)

    def evaluate(self, r: ArrayLike) -> NDArray[np.float64]:
        radii = np.array([k[0] for k in self.knots], dtype=np.float64)
        values = np.array([k[1] for k in self.knots], dtype=np.float64)
        return np.interp(np.asarray(r, dtype=np.float64), radii, values)

    def scaled(self, factor: float) -> "RadialProfile":
        return RadialProfile(knots=[(r, factor * v) for r, v in self.knots])

    @property
    def sup_positive(self) -> float:
        """||a+||_inf."""
        return max(0.0, max(v for _, v in self.knots))


class SystemSpec(BaseSchema):
    """Coefficients and exponent of the coupled gradient system."""

    a1: RadialProfile
    a2: RadialProfile
    q: float = Field(..., gt=0.0, description="Coupling exponent; must exceed 1")
    enforce_subcritical: bool = False


class SolverOptions(BaseSchema):
    """Knobs of the Nehari descent."""

    tol: float = Field(default=1e-8, gt=0.0, description="Relative Euler-Lagrange residual")
    max_iter: int = Field(default=20000, ge=1)
    metric: Literal["l2", "sobolev"] = "sobolev"
    seeds: int = Field(default=1, ge=1, description="Number of seeds; the lowest J wins")
    perturbation: float = Field(default=0.5, ge=0.0)


class IterationRecord(ReportSchema):
    iteration: int
    J: float
    residual: float
    step: float


class NehariProjection(ReportSchema):
    """Scaling factor onto the Nehari manifold and the check quantities."""

    t0: float
    norm_sq: float
    product: float
    G_after: float
    radial_derivative: float


class PositivityCheck(ReportSchema):
    J_before: float
    J_after: float
    holds: bool


class SolveReport(ReportSchema):
    """Outcome of a Nehari minimization; the fields are written separately."""

    J: float
    G: float
    G_relative: float
    norm_sq: float
    product: float
    residual: float
    residual_relative: float
    initial_residual: float
    converged: bool
    iterations: int
    restarts: int
    seed_index: int = 0
    metric: str
    min_u1: float
    min_u2: float
    distinctness: float
    distinct: bool
    coefficients_identical: bool
    r0: float
    min_norm_seen: float
    positivity: PositivityCheck
    lambda1: float
    log: list[IterationRecord] = Field(default_factory=list)
    symmetry: SymmetryReport | None = None


class PolarizedSolutionReport(ReportSchema):
    """Polarized ground state projected back onto the Nehari manifold."""

    normal: list[float]
    t0: float
    J_before: float
    J_after: float
    holds: bool


class LinearizationReport(ReportSchema):
    normal: list[float]
    difference_quotient_diagonal: bool
    residual_max: float
    residual_relative: float
    off_diagonal_min: float


class CouplingVerdict(ReportSchema):
    verdict: Literal["not weakly coupled", "weakly coupled", "fully coupled"]
    witness: dict[str, list[int]] = Field(
        default_factory=dict, description="Per pair 'i,j' the nodes where c_ij > 0"
    )
    negative_nodes: dict[str, list[int]] = Field(default_factory=dict)


class MaxPrincipleReport(ReportSchema):
    mode: Literal["small-volume", "strong"]
    verdict: Literal["holds", "fails", "hypothesis not met", "identically zero"]
    hypothesis_met: bool
    nodes: int
    lambda_D: float | None = None
    coupling_bound: float | None = None
    min_value: float | None = None
    violations: int = 0
    coupling: Literal["not weakly coupled", "weakly coupled", "fully coupled"] | None = None


class DirectionPositivity(ReportSchema):
    angle_deg: float
    min_components: list[float]
    positive: bool


class RotatingPlaneReport(ReportSchema):
    verdict: Literal["radial", "axis", "no symmetry detected", "inconclusive"]
    phi_minus_deg: float | None = None
    phi_plus_deg: float | None = None
    axis: list[float] | None = None
    find_axis: list[float] | None = None
    agrees: bool | None = None
    interior_directions: list[DirectionPositivity] = Field(default_factory=list)
    monotone: bool | None = None
