from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Only the cache directory is environment-backed (CPSDETECT_CACHE_DIR)
    cache_dir: Path = Field(default=Path.home() / ".cache" / "cpsdetect")

    model_config = {
        "env_prefix": "CPSDETECT_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "ignore",
    }


settings = Settings()
