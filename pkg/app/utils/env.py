"""Environment helpers for process-level settings."""
from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable

from dotenv import load_dotenv


def load_first_existing(paths: Iterable[Path | str]) -> Path | None:
    """Load the first existing .env file from the search paths; existing variables win."""
    for candidate in paths:
        path = Path(candidate)
        if path.exists():
            load_dotenv(path, override=False)
            return path
    return None


def env_str(name: str, default: str) -> str:
    return os.environ.get(name, default)
