"""Pydantic schemas for radial domains and grid metadata."""

from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import Field, model_validator
from scipy.special import gamma

from app.schemas.base import BaseSchema


class RadialDomain(BaseSchema):
    """Ball {|x| < R_out} or annulus {R_in < |x| < R_out} in R^N."""

    shape: Literal["ball", "annulus"]
    r_in: float = Field(default=0.0, ge=0.0, description="Inner radius (annulus only)")
    r_out: float = Field(..., gt=0.0, description="Outer radius")
    dimension: int = Field(default=2, ge=2, description="Space dimension N")

    @model_validator(mode="after")
    def validate_radii(self) -> "RadialDomain":
        if self.shape == "ball" and self.r_in != 0.0:
            raise ValueError("A ball has no inner radius")
        if self.r_in >= self.r_out:
            raise ValueError("Require r_in < r_out")
        return self

    def contains_squared(self, radius_sq: ArrayLike) -> NDArray[np.bool_]:
        """Membership test on squared radii."""
        rsq = np.asarray(radius_sq, dtype=np.float64)
        inside = rsq < self.r_out**2
        if self.shape == "annulus":
            inside &= rsq > self.r_in**2
        return inside

    def contains(self, radius: ArrayLike) -> NDArray[np.bool_]:
        """Rotation-invariant membership test |x| in (R_in, R_out)."""
        r = np.asarray(radius, dtype=np.float64)
        return self.contains_squared(r * r)

    @property
    def volume(self) -> float:
        """Lebesgue measure of the domain."""
        unit_ball = np.pi ** (self.dimension / 2) / gamma(self.dimension / 2 + 1)
        return float(unit_ball * (self.r_out**self.dimension - self.r_in**self.dimension))


class GridMetadata(BaseSchema):
    """JSON sidecar describing a grid; the mask is stored as a flat binary file."""

    domain: RadialDomain
    h: float = Field(..., gt=0.0)
    half_extent: int = Field(..., ge=1)
    n_nodes: int
    n_interior: int
