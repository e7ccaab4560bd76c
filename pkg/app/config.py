"""Runtime configuration."""
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


def _flag(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


class Config:
    """Base configuration."""

    # Paths
    BASE_DIR = Path(__file__).parent.parent
    OUTPUT_DIR = Path(os.getenv('ATTRIBUTION_OUTPUT_DIR', str(BASE_DIR / 'results')))

    # Logging
    LOG_LEVEL = os.getenv('ATTRIBUTION_LOG_LEVEL', 'INFO')
    LOG_JSON = _flag('ATTRIBUTION_LOG_JSON', 'true')


class DevelopmentConfig(Config):
    """Development configuration: console logs."""
    LOG_JSON = _flag('ATTRIBUTION_LOG_JSON', 'false')


class ProductionConfig(Config):
    """Production configuration."""
    pass


config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'default': ProductionConfig,
}


def get_config(name: str | None = None) -> type[Config]:
    return config.get(name or os.getenv('ATTRIBUTION_ENV', 'default'), ProductionConfig)
