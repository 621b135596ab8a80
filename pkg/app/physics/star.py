"""Energy-splitting STAR-RIS coefficients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from app.errors import InvalidArgumentError
from app.physics.channel import REFLECT, TRANSMIT

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class StarCoefficients:
    beta_t: np.ndarray
    beta_r: np.ndarray
    theta_t: np.ndarray
    theta_r: np.ndarray

    @property
    def elements(self) -> int:
        return self.beta_t.shape[0]

    @classmethod
    def even_split(cls, theta_t: np.ndarray, theta_r: np.ndarray) -> "StarCoefficients":
        n = len(theta_t)
        return cls(np.full(n, 0.5), np.full(n, 0.5), np.asarray(theta_t, float), np.asarray(theta_r, float))

    def amplitudes(self, zone: str) -> np.ndarray:
        return self.beta_t if zone == TRANSMIT else self.beta_r

    def phases(self, zone: str) -> np.ndarray:
        return self.theta_t if zone == TRANSMIT else self.theta_r


def build_coefficient_matrix(coefficients: StarCoefficients, zone: str) -> np.ndarray:
    if zone not in (TRANSMIT, REFLECT):
        raise InvalidArgumentError(f"zone must be {TRANSMIT!r} or {REFLECT!r}, got {zone!r}")
    return np.diag(coefficient_diagonal(coefficients, zone))


def coefficient_diagonal(coefficients: StarCoefficients, zone: str) -> np.ndarray:
    return np.sqrt(coefficients.amplitudes(zone)) * np.exp(1j * coefficients.phases(zone))


def wrap_phase(angles: np.ndarray) -> np.ndarray:
    """Map angles into [0, 2pi); values that round up to 2pi become 0."""
    wrapped = np.mod(angles, TWO_PI)
    return np.where(wrapped >= TWO_PI, 0.0, wrapped)
