"""Global laboratory configuration."""

from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Global laboratory settings."""

    # See validate_log_level()
    log_level: str = "WARNING"

    # To copy log messages to a central app insights
    central_logging_connection_string: Optional[str] = None

    # Resource caps. Exceeding any of these raises a SizeError (exit code 4).
    max_matrix_entries: int = 2**20  # entries per dense matrix
    max_enumerated_block: int = 6  # largest l for which all l! permutations are used
    max_net_tuples: int = 4096  # largest |net|^l enumerated by lifted_net_gap

    # See-saw ascent used for the lower end of the diamond-distance interval
    diamond_restarts: int = 20
    diamond_max_iter: int = 200
    diamond_tol: float = 1e-10

    # Redraws before derandomize() gives up
    derand_max_attempts: int = 100

    # Thread pool width for restarts and Monte Carlo trials (1 = sequential)
    workers: int = 1

    # Where run records are written unless a config says otherwise
    out_dir: Path = Path("runs")

    # Settings for the settings class itself.
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, log_level: str) -> str:
        """Check that the log level has a valid value."""
        # See https://docs.python.org/3/library/logging.html#logging-levels
        allowed_levels = (
            "CRITICAL",
            "FATAL",
            "ERROR",
            "WARNING",
            "WARN",
            "INFO",
            "DEBUG",
            "NOTSET",
        )
        if log_level not in allowed_levels:
            raise ValueError(f"{log_level} not in {allowed_levels}")
        return log_level

    @field_validator(
        "max_matrix_entries",
        "max_enumerated_block",
        "max_net_tuples",
        "diamond_restarts",
        "diamond_max_iter",
        "derand_max_attempts",
        "workers",
    )
    @classmethod
    def validate_positive(cls, value: int) -> int:
        """Caps and counts must be at least one."""
        if value < 1:
            raise ValueError(f"expected a positive integer, got {value}")
        return value


@lru_cache()
def get_settings() -> Settings:
    """Cache Settings as they should not change after startup."""
    return Settings()
