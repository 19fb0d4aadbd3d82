"""Pydantic schemas for radial kernels and their validation reports."""

from typing import Annotated, Literal

from pydantic import Field, field_validator, model_validator

from app.schemas.base import BaseSchema, ReportSchema, Verdict


class FractionalFamily(BaseSchema):
    """Power-law kernel c_{N,s} r^{-N-2s} of the fractional Laplacian."""

    kind: Literal["fractional"] = "fractional"
    N: int = Field(..., ge=1, description="Space dimension")
    s: float = Field(..., gt=0.0, lt=1.0, description="Order in (0, 1)")


class TabulatedFamily(BaseSchema):
    """Kernel profile given by samples (r, k0(r)), interpolated log-log."""

    kind: Literal["tabulated"] = "tabulated"
    N: int = Field(..., ge=1, description="Space dimension")
    radii: list[float] = Field(..., min_length=1)
    values: list[float] = Field(..., min_length=1)

    @field_validator("radii")
    @classmethod
    def validate_radii(cls, v: list[float]) -> list[float]:
        """Radii must be positive and strictly increasing."""
        if any(r <= 0.0 for r in v):
            raise ValueError("Tabulated radii must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("Tabulated radii must be strictly increasing")
        return v

    @model_validator(mode="after")
    def validate_values(self) -> "TabulatedFamily":
        """Values must be nonnegative, nonincreasing, and match the radii."""
        if len(self.values) != len(self.radii):
            raise ValueError("radii and values must have the same length")
        if any(k < 0.0 for k in self.values):
            raise ValueError("Kernel values must be nonnegative")
        if any(b > a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("Kernel values must be nonincreasing in r")
        return self


class KernelSpec(BaseSchema):
    """Radial kernel k(z) = k0(|z|) with its claimed monotonicity."""

    family: Annotated[FractionalFamily | TabulatedFamily, Field(discriminator="kind")]
    strictly_decreasing: bool = True

    @model_validator(mode="after")
    def validate_monotonicity_flag(self) -> "KernelSpec":
        """The strictly-decreasing flag must agree with the data."""
        family = self.family
        if isinstance(family, FractionalFamily):
            if not self.strictly_decreasing:
                raise ValueError("Fractional kernels are strictly decreasing")
            return self
        strict = all(b < a for a, b in zip(family.values, family.values[1:]))
        if self.strictly_decreasing != strict:
            raise ValueError(
                "strictly_decreasing flag does not match the tabulated values"
            )
        return self

    @property
    def dimension(self) -> int:
        return self.family.N

    @property
    def is_fractional(self) -> bool:
        return isinstance(self.family, FractionalFamily)

    @classmethod
    def fractional(cls, N: int, s: float) -> "KernelSpec":
        """Shorthand for the fractional-Laplacian kernel."""
        return cls(family=FractionalFamily(N=N, s=s), strictly_decreasing=True)

    @classmethod
    def tabulated(
        cls, N: int, radii: list[float], values: list[float], strictly_decreasing: bool | None = None
    ) -> "KernelSpec":
        """Shorthand for a tabulated kernel; infers the flag when omitted."""
        if strictly_decreasing is None:
            strictly_decreasing = all(b < a for a, b in zip(values, values[1:]))
        return cls(
            family=TabulatedFamily(N=N, radii=list(radii), values=list(values)),
            strictly_decreasing=strictly_decreasing,
        )


class KernelEvaluation(ReportSchema):
    """Kernel value at one radius with extrapolation metadata."""

    radius: float
    value: float
    region: Literal["analytic", "table", "below_table", "above_table"]
    extrapolated: bool


class KernelBounds(BaseSchema):
    """Two-sided power bounds (1/c) r^{-N-2s} <= k0 <= c r^{-N-2sigma} near 0, k0 <= c r^{-N-2gamma} beyond 1."""

    c: float | None = Field(default=None, gt=0.0)
    s: float = Field(..., gt=0.0, lt=1.0)
    sigma: float = Field(..., gt=0.0, lt=1.0)
    gamma: float = Field(..., gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def validate_order(self) -> "KernelBounds":
        if self.sigma < self.s:
            raise ValueError("Bounds require s <= sigma")
        return self


class BoundsVerdict(ReportSchema):
    """Outcome of checking KernelBounds against a kernel."""

    lower_near_origin: Verdict
    upper_near_origin: Verdict
    tail: Verdict
    c_required: float | None
    c_supplied: float | None
    holds: bool


class KernelValidationReport(ReportSchema):
    """Report produced by validate(); never raises."""

    integrability: Verdict
    integrability_value: float | None = None
    zeroth_moment_divergence: Verdict
    near_origin_exponent: float | None = None
    tail_exponent: float | None = None
    compact_tail: bool = False
    bounds: BoundsVerdict | None = None
    monotonicity: Literal["strictly decreasing", "nonincreasing", "violated"]
    flag_consistent: bool

    @property
    def valid(self) -> bool:
        """Whether the kernel may be used for assembly."""
        return self.integrability == "holds" and self.flag_consistent


class TruncatedKernel(ReportSchema):
    """Split k = k_delta + j_delta at radius delta with the far-part mass J_delta."""

    base: KernelSpec
    delta: float = Field(..., gt=0.0)
    tail_mass: float = Field(..., ge=0.0, description="J_delta, the L1 norm of j_delta")


class NormalizationCheck(ReportSchema):
    """Gamma-formula constant against the quadrature of its integral characterization."""

    N: int
    s: float
    gamma_formula: float
    quadrature: float
    relative_error: float
