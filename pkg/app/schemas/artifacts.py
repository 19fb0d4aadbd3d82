"""Headers and sidecars of the binary artifacts."""

from typing import Any

from pydantic import Field

from app.schemas.base import ReportSchema
from app.schemas.geometry import GridMetadata
from app.schemas.kernel import KernelSpec

ARTIFACT_FORMAT_VERSION = 1


class OperatorHeader(ReportSchema):
    """JSON header embedded at the front of an operator binary."""

    format_version: int = ARTIFACT_FORMAT_VERSION
    dtype: str = "<f8"
    n: int
    grid: GridMetadata
    kernel: KernelSpec
    cutoff_radius: float | None = None
    near_weights: dict[int, float] = Field(default_factory=dict)
    blocks: list[str] = Field(default_factory=lambda: ["weights", "kappa"])


class FieldSidecar(ReportSchema):
    """JSON sidecar of a flat field binary holding ``count`` vectors of length ``n``."""

    format_version: int = ARTIFACT_FORMAT_VERSION
    dtype: str = "<f8"
    n: int
    count: int
    names: list[str]
    grid: GridMetadata
    seed: int | None = None
    source: str | None = None


class RunRecord(ReportSchema):
    """Provenance written next to every set of outputs."""

    command: str
    seed: int
    threads: int
    config: dict[str, Any] = Field(default_factory=dict)
    versions: dict[str, str] = Field(default_factory=dict)
    artifacts: list[str] = Field(default_factory=list)
    exit_code: int = 0
