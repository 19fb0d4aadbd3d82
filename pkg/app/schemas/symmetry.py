"""Pydantic schemas for polarization and symmetry diagnostics."""

from typing import Literal

from pydantic import Field

from app.schemas.base import ReportSchema


class PolarizationVerdict(ReportSchema):
    """Whether u >= u o sigma on the H side, with interpolation slack for inexact directions."""

    normal: list[float]
    angle_deg: float | None = None
    exact: bool
    holds: bool
    max_violation: float = Field(..., ge=0.0)
    interpolation_bound: float = Field(default=0.0, ge=0.0)
    checked_nodes: int


class RingProfile(ReportSchema):
    """Angular profile of a field on one discrete circle."""

    radius: float
    residual: float = Field(..., ge=0.0, description="Largest increase along either half-profile")
    passed: bool
    angles: list[float] = Field(default_factory=list)
    values: list[float] = Field(default_factory=list)


class FoliatedVerdict(ReportSchema):
    """Foliated Schwarz check of one field about an axis."""

    field_index: int = 0
    axis: list[float]
    holds: bool
    tolerance: float
    interpolation_bound: float
    rings: list[RingProfile] = Field(default_factory=list)


class AxisResult(ReportSchema):
    """Outcome of the angular dominance sweep."""

    status: Literal["axis", "radial", "none", "inconclusive"]
    axis: list[float] | None = None
    axis_angle_deg: float | None = None
    arc_deg: tuple[float, float] | None = None
    members: int = 0
    sweep_size: int = 0
    resolution_deg: float
    endpoint_asymmetry: list[float] = Field(default_factory=list)
    endpoint_tolerance: float | None = None


class SymmetryReport(ReportSchema):
    """Direction verdicts, detected axis and foliated Schwarz verdicts for a set of fields."""

    directions: list[PolarizationVerdict] = Field(default_factory=list)
    axis: AxisResult
    foliated: list[FoliatedVerdict] = Field(default_factory=list)

    @property
    def foliated_holds(self) -> bool:
        return all(f.holds for f in self.foliated)


class EnergyReductionReport(ReportSchema):
    """Energy before and after polarization, with the equality-case class."""

    energy: float
    energy_polarized: float
    holds: bool
    equality: bool
    classification: Literal["u = u_H", "u = u_{σ_H(H)}", "neither"] | None = None
    dichotomy_asserted: bool


class ProductNormReport(ReportSchema):
    """||uv||_q before and after polarization with the equality condition."""

    norm: float
    norm_polarized: float
    holds: bool
    equality: bool
    condition: bool = Field(..., description="(u - u o sigma)(v - v o sigma) >= 0 on the H side")


class FunctionalReductionReport(ReportSchema):
    """J and G before and after polarizing a nonnegative pair."""

    J: float
    J_polarized: float
    G: float
    G_polarized: float
    holds: bool
