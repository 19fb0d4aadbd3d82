"""Runtime configuration using pydantic-settings."""

from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Numerical defaults and runtime options loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="NONLOCAL_",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    APP_NAME: str = "nonlocal-symmetry"
    APP_VERSION: str = "0.1.0"

    # Execution
    DEFAULT_SEED: int = Field(default=20240611, ge=0, lt=2**64)
    THREADS: int = Field(default=1, ge=1, description="Worker threads for row assembly and sweeps")
    MAX_OPERATOR_BYTES: int = Field(
        default=2 * 1024**3,
        description="Refuse dense operators whose estimated footprint exceeds this",
    )

    # Kernel quadrature
    TAIL_RADIUS_FACTOR: float = 10.0
    FACE_QUADRATURE_POINTS: int = Field(default=48, ge=8)
    NEAR_FIELD_GAUSS_POINTS: int = Field(default=3, ge=1)
    KAPPA_QUAD_RTOL: float = Field(default=1e-10, gt=0.0, description="Relative tolerance of the exterior-mass quadrature")
    TAIL_TABLE_POINTS: int = Field(default=512, ge=16)

    # Spectral
    EIGEN_TOL: float = Field(default=1e-10, gt=0.0)
    EIGEN_MAX_ITER: int = Field(default=2000, ge=1)

    # Solver
    SOLVER_TOL: float = Field(default=1e-8, gt=0.0, description="Relative Euler-Lagrange residual")
    SOLVER_MAX_ITER: int = Field(default=20000, ge=1)
    ARMIJO_C: float = Field(default=1e-4, gt=0.0, lt=1.0)
    ARMIJO_BACKTRACK: float = Field(default=0.5, gt=0.0, lt=1.0)
    STAGNATION_WINDOW: int = Field(default=50, ge=1)
    MAX_RESTARTS: int = Field(default=5, ge=0)
    DISTINCTNESS_RATIO: float = 1e-6

    # Symmetry diagnostics
    SWEEP_RESOLUTION_DEG: float = Field(default=1.0, gt=0.0, le=45.0)
    SYMMETRY_TOL: float = Field(default=1e-9, ge=0.0)
    ENDPOINT_SYMMETRY_FACTOR: float = Field(
        default=1.0,
        ge=0.0,
        description="Relative reverse-polarization violation accepted at arc endpoints, per radian of sweep resolution",
    )
    EQUALITY_RTOL: float = 1e-9
    RING_SAMPLES: int = Field(default=256, ge=8)
    ZERO_FIELD_TOL: float = 1e-6

    # Logging
    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    LOG_JSON: bool = False


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


# Global settings instance
settings = get_settings()
