"""Logarithmic unit conversions. All internal math is linear."""
from __future__ import annotations

import math

from app.errors import InvalidArgumentError


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def dbm_to_watts(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def watts_to_dbm(value_w: float) -> float:
    if value_w <= 0:
        raise InvalidArgumentError("power must be positive to express in dBm")
    return 10.0 * math.log10(value_w) + 30.0
