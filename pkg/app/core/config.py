"""
Runtime settings and logging setup
"""
import logging
import os
from functools import lru_cache
from typing import List

from dotenv import load_dotenv
from pydantic import BaseModel, Field

# Load environment variables
load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class Settings(BaseModel):
    """Process-wide settings read from the environment"""
    threads: int = Field(default=1, ge=1, description="Cap on joblib workers")
    log_level: str = "INFO"
    database_url: str = "sqlite:///./rmdgraph.db"
    cors_origins: List[str] = []


def _read_threads() -> int:
    raw = os.getenv("RMDGRAPH_THREADS", "1").strip()
    try:
        return max(1, int(raw))
    except ValueError:
        logging.getLogger(__name__).warning("Ignoring invalid RMDGRAPH_THREADS=%r", raw)
        return 1


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Build settings once per process"""
    origins = os.getenv("CORS_ORIGINS", "")
    return Settings(
        threads=_read_threads(),
        log_level=os.getenv("RMDGRAPH_LOG_LEVEL", "INFO").upper(),
        database_url=os.getenv("DATABASE_URL", "sqlite:///./rmdgraph.db"),
        cors_origins=[o.strip() for o in origins.split(",") if o.strip()],
    )


def configure_logging(level: str | None = None) -> None:
    """Install a single stream handler on the root logger"""
    level = (level or get_settings().log_level).upper()
    root = logging.getLogger()
    if not any(getattr(h, "_rmdgraph", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._rmdgraph = True
        root.addHandler(handler)
    root.setLevel(getattr(logging, level, logging.INFO))
