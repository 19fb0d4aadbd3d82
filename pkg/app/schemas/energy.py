"""Pydantic schemas describing assembled operators."""

from pydantic import Field

from app.schemas.base import ReportSchema
from app.schemas.geometry import GridMetadata
from app.schemas.kernel import KernelSpec


class OperatorStats(ReportSchema):
    """Summary written next to a serialized operator."""

    grid: GridMetadata
    kernel: KernelSpec
    near_weights: dict[int, float] = Field(
        default_factory=dict, description="Cell-quadrature weights keyed by integer |z|^2"
    )
    cutoff_radius: float | None = None
    weight_max: float
    kappa_min: float
    kappa_max: float
    kappa_quadrature_error: float = Field(..., description="Relative error estimate of the exterior-mass quadrature")
    memory_bytes: int
