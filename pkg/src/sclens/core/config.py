"""Application configuration settings."""

from typing import Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings."""

    PROJECT_NAME: str = "SCLENS"
    DEBUG: bool = False

    # Logging
    LOG_LEVEL: str = "INFO"

    # Output
    OUT: Optional[str] = None
    DEFAULT_THREADS: int = 1

    # Geodesic flow
    FLOW_TOL: float = 1e-8
    MIN_HITS: int = 100

    # Grids and boundary guard
    BOUNDARY_MASS_TOL: float = 1e-8
    BOUNDARY_ZONE: float = 0.1

    # Linear solvers
    CG_RTOL: float = 1e-13
    CG_MAXITER: int = 2000
    HEAT_SUBSTEPS: int = 8
    RETAINED_AMPLITUDE: float = 1e-8

    # Nonlinear runs
    BLOWUP_FACTOR: float = 1e6

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        """Accept log levels in any case."""
        if isinstance(v, str):
            return v.strip().upper()
        raise ValueError(v)

    class Config:
        """Pydantic config."""

        env_prefix = "SCLENS_"
        env_file = ".env"
        case_sensitive = True


settings = Settings()
