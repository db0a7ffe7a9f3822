"""
Configuration settings for fluxcav.

This module provides centralized configuration management using Pydantic settings
with support for environment variables and a local `.env` file.
"""

from typing import List

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Application settings with environment variable support.

    All settings can be overridden by environment variables with the same name.
    For example, WORKERS can be set via the WORKERS environment variable.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Application
    APP_NAME: str = "fluxcav"
    APP_VERSION: str = "0.1.0"
    ENVIRONMENT: str = Field(default="development", description="Deployment environment")
    DEBUG: bool = Field(default=False, description="Enable debug mode")

    # Server
    HOST: str = Field(default="0.0.0.0", description="Server host")
    PORT: int = Field(default=8000, description="Server port")
    ALLOWED_ORIGINS: List[str] = Field(
        default=["http://localhost:3000", "http://localhost:8501"],
        description="Allowed CORS origins"
    )

    # Execution
    WORKERS: int = Field(
        default=4,
        description="Worker threads for map simulation and synthesis"
    )

    # Physics defaults
    DEFAULT_CHARGING_ENERGY_GHZ: float = Field(
        default=0.130,
        description="Transmon charging energy E_c used when a document omits it"
    )
    DEFAULT_COUPLING_GHZ: float = Field(
        default=0.05,
        description="Qubit-cavity coupling g used when a document omits it"
    )
    DEFAULT_QUBIT_LINEWIDTH_GHZ: float = Field(
        default=0.005,
        description="Qubit spectroscopic linewidth (FWHM) used when a document omits it"
    )

    # Numerics
    CONDITION_LIMIT: float = Field(
        default=1e12,
        description="Largest crosstalk-matrix condition number accepted for inversion"
    )
    FIT_MAX_ITERATIONS: int = Field(default=200, description="Damped Gauss-Newton iteration cap")
    FIT_TOLERANCE: float = Field(
        default=1e-10,
        description="Relative cost change below which a fit is converged"
    )

    # Peak extraction and tracking
    PEAK_THRESHOLD: float = Field(
        default=0.3,
        description="Peak threshold as a fraction of the column maximum"
    )
    PEAK_MIN_SEPARATION_GHZ: float = Field(
        default=0.02,
        description="Minimum separation between peaks of one bias column"
    )
    TRACK_MAX_JUMP_STEPS: int = Field(
        default=5,
        description="Largest per-column track jump in probe-grid steps"
    )
    TRACK_MIN_LENGTH: int = Field(
        default=3,
        description="Tracks shorter than this are discarded"
    )

    # File formats
    CSV_FLOAT_FORMAT: str = Field(
        default="%.17g",
        description="printf format for floats written to CSV (round-trip precision)"
    )

    # Logging
    LOG_LEVEL: str = Field(default="INFO", description="Logging level")
    LOG_FORMAT: str = Field(
        default="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        description="Log message format"
    )

    @field_validator("ENVIRONMENT")
    @classmethod
    def validate_environment(cls, v: str) -> str:
        """Validate environment setting."""
        allowed = ["development", "staging", "production", "testing"]
        if v not in allowed:
            raise ValueError(f"Environment must be one of {allowed}")
        return v

    @field_validator("WORKERS", "FIT_MAX_ITERATIONS", "TRACK_MAX_JUMP_STEPS", "TRACK_MIN_LENGTH")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        """Counts must be at least one."""
        if v < 1:
            raise ValueError("must be >= 1")
        return v


# Create global settings instance
settings = Settings()


def get_settings() -> Settings:
    """
    Dependency function to get settings instance.

    Returns:
        Settings: Application settings
    """
    return settings
