# csmil/core/config.py
import logging
from functools import lru_cache
from typing import Literal

from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from csmil.core.errors import ConfigurationError


class Settings(BaseSettings):
    # Project Info
    PROJECT_NAME: str = "csmil"
    VERSION: str = "1.0.0"

    # Logging Configuration (CSMIL_LOG)
    LOG: Literal["error", "info", "debug"] = "info"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Workers for folds / trials / grid points
    DEFAULT_JOBS: int = 1

    # tqdm progress bars on stderr
    PROGRESS: bool = True

    # Significant digits for floats in JSON / CSV artifacts
    FLOAT_DIGITS: int = 17

    model_config = SettingsConfigDict(env_prefix="CSMIL_", env_file=".env", extra="ignore")

    @property
    def log_level(self) -> int:
        return {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}[self.LOG]


@lru_cache
def get_settings() -> Settings:
    """Process settings, read from the environment on first use"""
    try:
        return Settings()
    except ValidationError as e:
        fields = "; ".join(
            f"CSMIL_{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"invalid environment settings: {fields}")
