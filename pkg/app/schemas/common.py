"""Common report schemas: error diagnostics and property-suite results."""

from typing import Any

from pydantic import Field

from app.schemas.base import ReportSchema


class ErrorResponse(ReportSchema):
    """Diagnostics written when a command fails."""

    detail: str = Field(..., examples=["Coefficient exceeds the first eigenvalue"])
    error_code: str | None = Field(None, examples=["DomainError"])
    errors: dict[str, Any] | None = Field(None, examples=[{"lambda1": 3.2}])
    exit_code: int = 1


class PropertyResult(ReportSchema):
    """Outcome of one property suite."""

    name: str
    passed: bool
    trials: int = Field(..., ge=0)
    violations: int = Field(default=0, ge=0)
    max_violation: float = 0.0
    details: dict[str, Any] = Field(default_factory=dict)


class VerifySummary(ReportSchema):
    """Pass/fail counts over all property suites."""

    seed: int
    quick: bool
    passed: bool
    total: int
    failed: list[str] = Field(default_factory=list)
    results: list[PropertyResult] = Field(default_factory=list)
