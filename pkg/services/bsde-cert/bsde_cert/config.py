import os
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, Field


class Settings(BaseModel):
    """Runtime configuration loaded from environment variables."""

    experiments_dir: Path = Field(
        default_factory=lambda: Path(os.getenv("BSDE_EXPERIMENTS_DIR", "experiments"))
    )
    reports_dir: Path = Field(
        default_factory=lambda: Path(os.getenv("BSDE_REPORTS_DIR", "data/reports"))
    )
    workers: int = Field(default_factory=lambda: int(os.getenv("BSDE_WORKERS", "1")), ge=1)
    max_cells: int = Field(
        default_factory=lambda: int(float(os.getenv("BSDE_MAX_CELLS", "2e8"))), ge=1
    )
    log_level: str = Field(default_factory=lambda: os.getenv("BSDE_LOG_LEVEL", "INFO"))
    default_seed: int = Field(default_factory=lambda: int(os.getenv("BSDE_SEED", "7")), ge=0)


@lru_cache(maxsize=None)
def get_settings() -> Settings:
    load_dotenv()
    return Settings()
