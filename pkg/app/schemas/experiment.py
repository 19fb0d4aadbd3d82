"""Experiment configuration: one model per INI section, unknown keys rejected."""

from pathlib import Path
from typing import Any, Literal

from pydantic import Field, field_validator, model_validator

from app.schemas.base import BaseSchema
from app.schemas.geometry import RadialDomain
from app.schemas.solver import RadialProfile, SolverOptions, SystemSpec


class KernelSection(BaseSchema):
    family: Literal["fractional", "tabulated"] = "fractional"
    s: float | None = Field(default=0.5, gt=0.0, lt=1.0)
    table: Path | None = Field(default=None, description="Two-column CSV of (r, k0(r))")
    strictly_decreasing: bool | None = None
    cutoff_radius: float | None = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def validate_family(self) -> "KernelSection":
        if self.family == "fractional" and self.s is None:
            raise ValueError("A fractional kernel needs s")
        if self.family == "tabulated" and self.table is None:
            raise ValueError("A tabulated kernel needs a table path")
        return self


class DomainSection(BaseSchema):
    shape: Literal["ball", "annulus"] = "annulus"
    r_in: float = Field(default=0.5, ge=0.0)
    r_out: float = Field(default=1.0, gt=0.0)
    N: int = Field(default=2, ge=2)

    @model_validator(mode="after")
    def validate_radii(self) -> "DomainSection":
        if self.r_in >= self.r_out:
            raise ValueError("Require r_in < r_out")
        return self

    def to_domain(self) -> RadialDomain:
        return RadialDomain(
            shape=self.shape,
            r_in=self.r_in if self.shape == "annulus" else 0.0,
            r_out=self.r_out,
            dimension=self.N,
        )


class GridSection(BaseSchema):
    h: float | None = Field(default=None, gt=0.0)
    target_nodes: int | None = Field(default=800, ge=1)

    @model_validator(mode="after")
    def validate_resolution(self) -> "GridSection":
        if self.h is not None:
            self.target_nodes = None
        elif self.target_nodes is None:
            raise ValueError("Give either h or target_nodes")
        return self


class SystemSection(BaseSchema):
    a1: RadialProfile = Field(default_factory=lambda: RadialProfile.constant(0.0))
    a2: RadialProfile = Field(default_factory=lambda: RadialProfile.constant(0.3))
    q: float = Field(default=2.0, gt=1.0)
    coefficient_units: Literal["absolute", "lambda1"] = "lambda1"
    enforce_subcritical: bool = False

    @field_validator("a1", "a2", mode="before")
    @classmethod
    def parse_profile(cls, v: Any) -> Any:
        if isinstance(v, str):
            try:
                return RadialProfile.parse(v)
            except ValueError as exc:
                raise ValueError(f"Cannot parse profile {v!r}: expected 'value' or 'r:value, ...'") from exc
        if isinstance(v, int | float):
            return RadialProfile.constant(float(v))
        return v

    def to_spec(self) -> SystemSpec:
        return SystemSpec(a1=self.a1, a2=self.a2, q=self.q, enforce_subcritical=self.enforce_subcritical)


class DiagnosticsSection(BaseSchema):
    resolution_deg: float = Field(default=1.0, gt=0.0, le=45.0)
    tol: float | None = Field(default=None, ge=0.0, description="Absolute symmetry tolerance")


class ExperimentConfig(BaseSchema):
    """Complete experiment; every section is optional and defaults to the annulus ground-state run."""

    kernel: KernelSection = Field(default_factory=KernelSection)
    domain: DomainSection = Field(default_factory=DomainSection)
    grid: GridSection = Field(default_factory=GridSection)
    system: SystemSection = Field(default_factory=SystemSection)
    solver: SolverOptions = Field(default_factory=SolverOptions)
    diagnostics: DiagnosticsSection = Field(default_factory=DiagnosticsSection)
