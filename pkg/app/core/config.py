"""
Configuration management for hierkrig.
Centralized settings with environment variable support and validation.
"""

from typing import Optional
from pydantic import field_validator
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Application settings with environment variable support."""

    app_description: str = "Kriging-based optimization in hierarchical search spaces"

    # Logging settings
    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    log_file: Optional[str] = None

    # Harness defaults
    workers: int = 1
    reps: int = 20
    paper_reps: int = 100
    seed: int = 1
    record_timings: bool = False

    # Model fitting
    likelihood_budget: int = 200
    scale_lower: float = 1e-4
    scale_upper: float = 1e2
    nugget_lower: float = 1e-8
    nugget_upper: float = 1e-2

    # Optimization loop
    ei_budget: int = 10_000
    smbo_budget: int = 10
    smbo_init: int = 3

    # Model quality study
    train_size: int = 10
    test_size: int = 1000

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level is valid."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of: {valid_levels}")
        return v.upper()

    @field_validator("scale_upper", "nugget_upper")
    @classmethod
    def validate_positive_bound(cls, v: float) -> float:
        """Search boxes are log-scaled, so bounds must be positive."""
        if v <= 0:
            raise ValueError("Search box bounds must be positive")
        return v

    model_config = {
        "env_prefix": "HIERKRIG_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "case_sensitive": False,
        "extra": "ignore",
    }


# Global settings instance
settings = Settings()
