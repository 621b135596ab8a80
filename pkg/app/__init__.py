"""Service factory for the STAR-RIS energy-efficiency simulator."""
from __future__ import annotations

__version__ = "0.1.0"

import logging
import os
from pathlib import Path
from typing import Optional

from app.config import RunConfig
from app.services.experiment_service import ExperimentService
from app.services.metrics_service import MetricsService
from app.utils.env import load_first_existing

LOGGER = logging.getLogger("starris")


def configure_environment() -> None:
    """Load .env files and set up logging once per process."""
    base_dir = Path(__file__).resolve().parent.parent
    load_first_existing([
        Path.cwd() / ".env",
        base_dir / ".env",
    ])
    log_level = os.environ.get("STARRIS_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def create_services(
    config: RunConfig,
    quiet: bool = False,
    resume: Optional[Path] = None,
    channels: Optional[Path] = None,
) -> ExperimentService:
    configure_environment()
    metrics_service = MetricsService()
    service = ExperimentService(
        config,
        metrics_service=metrics_service,
        quiet=quiet,
        resume=resume,
        channels_path=channels,
    )
    LOGGER.info("Prepared %s run (seed=%s) writing to %s", config.mode, config.seed, config.output_dir)
    return service
