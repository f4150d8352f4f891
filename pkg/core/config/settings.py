"""Configuration management using Pydantic Settings"""
from pydantic_settings import BaseSettings
from pydantic import ConfigDict, Field
from typing import Optional

class Settings(BaseSettings):
    """Ambient settings. Nothing here changes a numerical result."""

    # ==================== Application ====================
    APP_NAME: str = "modalid"
    APP_VERSION: str = "1.0.0"

    # ==================== Logging ====================
    LOG_LEVEL: str = "INFO"
    LOG_JSON: bool = True
    LOG_DIR: Optional[str] = None  # console only when unset

    # ==================== Parallelism ====================
    MAX_WORKERS: int = Field(default=1, ge=1)  # threads for blocked frequency reductions

    model_config = ConfigDict(
        env_file=".env",
        case_sensitive=True,
        extra="ignore"  # Ignore extra environment variables not defined in the model
    )

settings = Settings()
