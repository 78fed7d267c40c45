import os
from pathlib import Path
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-wide settings read from the environment"""

    # Parallelism
    SPIKELAB_THREADS: int = Field(default=os.cpu_count() or 1, description="Worker pool cap for sweeps")

    # Logging
    SPIKELAB_LOG_LEVEL: str = Field(default="INFO", description="Root log level")
    SPIKELAB_LOG_FILE: Optional[Path] = Field(default=None, description="Optional log file")

    # Output
    SPIKELAB_OUTPUT_DIR: Path = Field(default=Path("output"), description="Default output directory")

    # Environment
    ENVIRONMENT: str = Field(default="development", description="Environment type")

    @field_validator('SPIKELAB_THREADS', mode='before')
    @classmethod
    def parse_threads(cls, v):
        if isinstance(v, str) and not v.strip():
            return os.cpu_count() or 1
        return v

    @field_validator('SPIKELAB_THREADS')
    @classmethod
    def clamp_threads(cls, v: int) -> int:
        return max(1, v)

    @field_validator('SPIKELAB_LOG_LEVEL')
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        return v.upper()

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True
        extra = "ignore"


# Global settings instance
settings = Settings()
