from __future__ import annotations
from functools import lru_cache
from typing import Optional
import os

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from src.utils.errors import ConfigError

load_dotenv()

def get_env(key: str, default: Optional[str] = None) -> Optional[str]:
    return os.getenv(key, default)


class Settings(BaseModel):
    enumeration_budget: int = Field(65536, ge=1)
    false_negative: float = Field(0.10, ge=0.0, le=1.0)
    false_positive: float = Field(0.05, ge=0.0, le=1.0)
    density_floor: float = Field(0.05, ge=0.0, le=1.0)
    descend_threshold: float = Field(64, ge=0)
    minutes_per_traversal: float = Field(4.0, ge=0.0)
    minutes_per_sensing: float = Field(0.75, ge=0.0)
    sample_attempts: int = Field(20000, ge=1)
    data_dir: str = "data"
    log_level: str = "INFO"


_ENV_KEYS = {
    "enumeration_budget": "SCOUT_ENUMERATION_BUDGET",
    "false_negative": "SCOUT_FALSE_NEGATIVE",
    "false_positive": "SCOUT_FALSE_POSITIVE",
    "density_floor": "SCOUT_DENSITY_FLOOR",
    "descend_threshold": "SCOUT_DESCEND_THRESHOLD",
    "minutes_per_traversal": "SCOUT_MINUTES_PER_TRAVERSAL",
    "minutes_per_sensing": "SCOUT_MINUTES_PER_SENSING",
    "sample_attempts": "SCOUT_SAMPLE_ATTEMPTS",
    "data_dir": "SCOUT_DATA_DIR",
    "log_level": "SCOUT_LOG_LEVEL",
}


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Settings from SCOUT_* environment variables (and .env), defaults otherwise."""
    values = {}
    for field, key in _ENV_KEYS.items():
        raw = get_env(key)
        if raw is not None and raw.strip() != "":
            values[field] = raw.strip()
    try:
        return Settings(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid SCOUT_* setting: {e}") from e
