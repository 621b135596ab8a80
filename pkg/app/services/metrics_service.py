"""Host and process snapshot recorded in every run manifest."""
from __future__ import annotations

import os
import platform
import socket
import time
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

try:  # psutil is optional during development
    import psutil  # type: ignore
except ImportError:  # pragma: no cover - runtime fallback
    psutil = None


@dataclass
class MetricsSnapshot:
    captured_at: float
    payload: Dict[str, Any]


class MetricsService:
    """Wall-clock timing for one run plus a cached host description."""

    def __init__(self, cache_ttl: float = 2.0) -> None:
        self._cache_ttl = cache_ttl
        self._cache: Optional[MetricsSnapshot] = None
        self._started = time.time()
        self._started_monotonic = time.perf_counter()

    @property
    def started_at(self) -> float:
        return self._started

    def elapsed(self) -> float:
        return time.perf_counter() - self._started_monotonic

    def current(self) -> Dict[str, Any]:
        now = time.time()
        if self._cache and now - self._cache.captured_at <= self._cache_ttl:
            return self._cache.payload
        payload = self._gather()
        self._cache = MetricsSnapshot(now, payload)
        return payload

    def _gather(self) -> Dict[str, Any]:
        return {
            "system": self._system_info(),
            "process": self._process_metrics(),
        }

    def _system_info(self) -> Dict[str, Any]:
        info: Dict[str, Any] = {
            "hostname": socket.gethostname(),
            "platform": platform.platform(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "cpu_count": os.cpu_count(),
        }
        if psutil:
            memory = psutil.virtual_memory()
            info["memory_total"] = memory.total
            info["memory_available"] = memory.available
        return info

    def _process_metrics(self) -> Dict[str, Any]:
        metrics: Dict[str, Any] = {"pid": os.getpid(), "elapsed_seconds": self.elapsed()}
        if psutil:
            try:
                process = psutil.Process()
                metrics["rss_bytes"] = process.memory_info().rss
                metrics["cpu_seconds"] = sum(process.cpu_times()[:2])
            except (psutil.Error, OSError):
                pass
        return metrics
