"""Pydantic schemas for eigenvalue results."""

from pydantic import Field

from app.schemas.base import ReportSchema
from app.schemas.geometry import GridMetadata


class EigenSummary(ReportSchema):
    """Scalar part of an eigen computation; phi1 is written as a flat binary."""

    lambda1: float = Field(..., gt=0.0)
    iterations: int
    residual: float = Field(..., description="||I phi - lambda phi||_h")
    relative_residual: float
    n_interior: int
    grid: GridMetadata
    min_phi1: float
