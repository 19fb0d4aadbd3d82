"""Custom exceptions for the library and CLI."""

from typing import Any


class AppException(Exception):
    """Base exception for application errors."""

    def __init__(
        self,
        message: str,
        exit_code: int = 1,
        details: dict[str, Any] | None = None,
    ) -> None:
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


class DomainError(AppException):
    """Raised when an input lies outside the mathematical domain of an operation."""

    def __init__(self, message: str = "Argument outside domain", details: dict[str, Any] | None = None):
        super().__init__(message=message, details=details)


class KernelValidationError(AppException):
    """Raised when a kernel fails the integrability checks required downstream."""

    def __init__(self, message: str = "Kernel validation failed", details: dict[str, Any] | None = None):
        super().__init__(message=message, details=details)


class TailMassInfiniteError(AppException):
    """Raised when the kernel tail beyond a truncation radius is not integrable."""

    def __init__(self, message: str = "tail mass infinite", details: dict[str, Any] | None = None):
        super().__init__(message=message, details=details)


class GridMismatchError(AppException):
    """Raised when fields and operators live on different grids."""

    def __init__(self, message: str = "Grid mismatch", details: dict[str, Any] | None = None):
        super().__init__(message=message, details=details)


class PairingError(AppException):
    """Raised when an exact reflection pairing is required but unavailable."""

    def __init__(
        self,
        message: str = "Exact reflection pairing unavailable; use is_polarized with interpolation",
        details: dict[str, Any] | None = None,
    ):
        super().__init__(message=message, details=details)


class ResourceLimitError(AppException):
    """Raised when an operation would exceed the configured memory cap."""

    def __init__(self, message: str = "Resource limit exceeded", details: dict[str, Any] | None = None):
        super().__init__(message=message, details=details)


class ConvergenceError(AppException):
    """Raised when an iteration hits its cap; carries the best iterate."""

    def __init__(
        self,
        message: str = "Iteration cap reached",
        best: Any = None,
        residual: float | None = None,
        details: dict[str, Any] | None = None,
    ):
        self.best = best
        self.residual = residual
        payload = {"residual": residual, **(details or {})}
        super().__init__(message=message, details=payload)


class DegenerateProductError(AppException):
    """Raised when the coupling product vanishes and no Nehari projection exists."""

    def __init__(self, message: str = "product degenerate — reseed", details: dict[str, Any] | None = None):
        super().__init__(message=message, details=details)


class StagnationError(AppException):
    """Raised when descent makes no progress over the stagnation window."""

    def __init__(self, message: str = "Descent stagnated", details: dict[str, Any] | None = None):
        super().__init__(message=message, details=details)


class ConfigError(AppException):
    """Raised when an experiment configuration cannot be parsed or validated."""

    def __init__(self, message: str = "Invalid configuration", details: dict[str, Any] | None = None):
        super().__init__(message=message, exit_code=2, details=details)


class ArtifactError(AppException):
    """Raised when an artifact file is malformed or inconsistent with its metadata."""

    def __init__(self, message: str = "Malformed artifact", details: dict[str, Any] | None = None):
        super().__init__(message=message, details=details)
