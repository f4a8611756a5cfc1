"""
Configuration management for evade-lite.

Process-level settings come from environment variables (prefix ``EVADE_``) and
an optional ``.env`` file. Campaign settings come from a JSON run configuration
validated into :class:`evade_lite.schemas.RunConfig`.
"""

import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
from pydantic import Field, ValidationError as PydanticValidationError
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigurationError

# Stage names for the seed fan-out. Order is part of the reproducibility contract.
SEED_STAGES = ("split", "train", "background", "shap", "subsample")


class LoggingSettings(BaseSettings):
    """Logging configuration settings."""

    model_config = SettingsConfigDict(env_prefix="EVADE_LOG_")

    level: str = Field(default="INFO")
    format: str = Field(
        default="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    file: Optional[str] = Field(default=None)
    max_file_size: int = Field(default=10_000_000)  # 10MB
    backup_count: int = Field(default=5)

    @field_validator("level")
    @classmethod
    def validate_level(cls, v: str) -> str:
        valid_levels = ["CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of: {valid_levels}")
        return v.upper()


class Settings(BaseSettings):
    """Main application settings."""

    model_config = SettingsConfigDict(
        env_prefix="EVADE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    app_name: str = "evade-lite"
    app_version: str = "0.1.0"
    debug: bool = Field(default=False)

    output_root: Path = Field(default=Path("runs"))
    workers: int = Field(default=1, ge=1)

    logging: LoggingSettings = Field(default_factory=LoggingSettings)


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


def derive_seed(seed: int, stage: str) -> int:
    """Deterministic per-stage seed derived from the top-level campaign seed."""
    if stage not in SEED_STAGES:
        raise ConfigurationError(f"Unknown seed stage: {stage}", setting="seed")
    sequence = np.random.SeedSequence([int(seed), SEED_STAGES.index(stage)])
    return int(sequence.generate_state(1)[0])


def load_run_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None):
    """
    Load and validate a JSON run configuration.

    Args:
        path: Path to the JSON document
        overrides: Scalar fields taken from CLI flags (``None`` values ignored)

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigurationError: If the file is missing, not JSON, or invalid
    """
    from evade_lite.schemas import RunConfig

    config_path = Path(path)
    if not config_path.exists():
        raise ConfigurationError(f"Config file not found: {config_path}", setting="config")
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(
            f"Config file is not valid JSON: {e}", setting="config"
        ) from e

    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value

    try:
        config = RunConfig.model_validate(raw)
    except PydanticValidationError as e:
        first = e.errors()[0]
        setting = ".".join(str(part) for part in first.get("loc", ()))
        raise ConfigurationError(
            f"Invalid run configuration: {setting}: {first.get('msg')}",
            setting=setting,
        ) from e

    return config.resolve_paths(config_path.parent)
