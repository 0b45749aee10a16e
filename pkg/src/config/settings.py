"""Process-wide settings and the pipeline configuration loader."""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from exceptions import ConfigError
from models.pipeline_config import PipelineConfig
from utils.logger import logger

YAML_SUFFIXES = (".yaml", ".yml")


class Settings(BaseSettings):
    """Application settings with validation."""

    model_config = SettingsConfigDict(
        env_prefix="MASKMEND_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_DIR: str = ""  # empty disables file sinks

    # Concurrency for image-level work items and deep-ensemble members
    WORKERS: int = Field(default=1, ge=1)

    # Defaults for pipeline configs that leave these keys out
    DEFAULT_DELTA: float = Field(default=0.125, gt=0.0, lt=0.25)
    DEFAULT_ENSEMBLE_SIZE: int = Field(default=8, ge=1)
    DEFAULT_EPOCHS: int = Field(default=15, ge=1)


def _normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def _parse_key_values(text: str, path: Path) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {raw!r}")
        values[_normalize_key(key)] = value.strip().strip('"').strip("'")
    return values


def _parse_yaml(text: str, path: Path) -> Dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat mapping, got {type(data).__name__}")
    nested = [key for key, value in data.items() if isinstance(value, (dict, list))]
    if nested:
        raise ConfigError(f"{path}: nested values are not supported: {', '.join(map(str, nested))}")
    return {_normalize_key(str(key)): value for key, value in data.items()}


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Raw key/value pairs of a flat config file (``key = value`` text or YAML).

    A relative ``manifest`` entry is resolved against the file's directory.
    """
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}")
    if config_path.suffix.lower() in YAML_SUFFIXES:
        values = _parse_yaml(text, config_path)
    else:
        values = _parse_key_values(text, config_path)
    manifest = values.get("manifest")
    if manifest and not Path(str(manifest)).is_absolute():
        values["manifest"] = config_path.parent / str(manifest)
    return values


def load_pipeline_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None
) -> PipelineConfig:
    """Merge settings defaults, the config file and CLI overrides (CLI wins).

    Raises:
        ConfigError: On unreadable files, unknown keys or invalid values
    """
    values: Dict[str, Any] = {
        "epochs": settings.DEFAULT_EPOCHS,
        "delta": settings.DEFAULT_DELTA,
        "ensemble_size": settings.DEFAULT_ENSEMBLE_SIZE,
        "workers": settings.WORKERS,
    }
    if path is not None:
        values.update(read_config_file(path))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[_normalize_key(key)] = value
    try:
        cfg = PipelineConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid pipeline configuration: {e}")
    logger.debug(f"Pipeline config: {cfg.model_dump_json()}")
    return cfg


# Create settings instance with validation
try:
    settings = Settings()
    logger.debug(f"LOG_LEVEL: {settings.LOG_LEVEL}")
    logger.debug(f"WORKERS: {settings.WORKERS}")
except Exception as e:
    raise ConfigError(f"Failed to load configuration: {e}")
