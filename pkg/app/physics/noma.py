"""NOMA/SIC achievable rates, transmit power, energy efficiency and constraint checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.config import SystemConfig
from app.errors import InvalidArgumentError
from app.physics.channel import ChannelRealization, cascade
from app.physics.star import TWO_PI, StarCoefficients, build_coefficient_matrix

POWER_TOLERANCE = 1e-9
SPLIT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BeamformingSet:
    """One length-M complex beamformer per user, stored row-wise."""

    vectors: np.ndarray

    @property
    def num_users(self) -> int:
        return self.vectors.shape[0]

    @property
    def antennas(self) -> int:
        return self.vectors.shape[1]

    def user(self, index: int) -> np.ndarray:
        return self.vectors[index].reshape(-1, 1)

    def powers(self) -> np.ndarray:
        return np.sum(np.abs(self.vectors) ** 2, axis=1)


@dataclass(frozen=True)
class RateReport:
    rates: np.ndarray
    order: Tuple[int, ...]
    pair_rates: Dict[Tuple[int, int], float]

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rates))

    @property
    def min_rate(self) -> float:
        return float(np.min(self.rates))


def effective_channels(channels: ChannelRealization, coefficients: StarCoefficients) -> np.ndarray:
    """Row u is the cascaded 1 x M channel of user u through its zone's matrix."""
    if coefficients.elements != channels.elements:
        raise InvalidArgumentError(
            f"coefficients cover {coefficients.elements} elements, channel has {channels.elements}"
        )
    matrices = {zone: build_coefficient_matrix(coefficients, zone) for zone in ("T", "R")}
    rows = [
        cascade(channels.user_channel(user), matrices[channels.zone_of(user)], channels.G)[0]
        for user in range(channels.num_users)
    ]
    return np.vstack(rows)


def order_by_gain(effective: np.ndarray) -> Tuple[int, ...]:
    gains = np.sum(np.abs(effective) ** 2, axis=1)
    return tuple(int(u) for u in np.argsort(gains, kind="stable"))


def decoding_order(channels: ChannelRealization, coefficients: StarCoefficients) -> Tuple[int, ...]:
    """Weakest effective channel first; equal gains keep user-index order."""
    return order_by_gain(effective_channels(channels, coefficients))


def achievable_rates(
    channels: ChannelRealization,
    coefficients: StarCoefficients,
    beams: BeamformingSet,
    noise_power: float,
    order: Sequence[int] | None = None,
) -> RateReport:
    effective = effective_channels(channels, coefficients)
    if order is None:
        order = order_by_gain(effective)
    return rates_from_effective(effective, beams, noise_power, order)


def rates_from_effective(
    effective: np.ndarray, beams: BeamformingSet, noise_power: float, order: Sequence[int]
) -> RateReport:
    if noise_power <= 0:
        raise InvalidArgumentError(f"noise power must be > 0, got {noise_power}")
    if beams.vectors.shape != effective.shape:
        raise InvalidArgumentError(f"beamformers {beams.vectors.shape} do not match channels {effective.shape}")
    order = tuple(int(u) for u in order)
    if sorted(order) != list(range(effective.shape[0])):
        raise InvalidArgumentError(f"decoding order {order} is not a permutation of the users")

    # received[j, i] = |g_j . w_i|^2
    received = np.abs(effective @ beams.vectors.T) ** 2
    rates = np.zeros(len(order))
    pair_rates: Dict[Tuple[int, int], float] = {}
    for position, user in enumerate(order):
        later = list(order[position + 1 :])
        decoders = order[position:]
        per_decoder: List[float] = []
        for decoder in decoders:
            interference = float(np.sum(received[decoder, later])) if later else 0.0
            rate = float(np.log2(1.0 + received[decoder, user] / (interference + noise_power)))
            pair_rates[(user, decoder)] = rate
            per_decoder.append(rate)
        rates[user] = min(per_decoder)
    return RateReport(rates=rates, order=order, pair_rates=pair_rates)


def transmit_power(beams: BeamformingSet) -> float:
    return float(np.sum(np.abs(beams.vectors) ** 2))


def energy_efficiency(rates: RateReport | np.ndarray, power: float, cfg: SystemConfig) -> float:
    """Bits per joule: B_w * sum rate / (P_T / gamma + P_C)."""
    if power < 0:
        raise InvalidArgumentError(f"transmit power must be >= 0, got {power}")
    values = rates.rates if isinstance(rates, RateReport) else np.asarray(rates, dtype=float)
    return float(cfg.bandwidth * np.sum(values) / (power / cfg.amplifier_efficiency + cfg.static_power))


@dataclass(frozen=True)
class ConstraintCheck:
    """``margin`` is slack for power and rate (negative on failure) and the
    worst deviation for the split and phase checks (positive on failure)."""

    name: str
    passed: bool
    margin: float
    per_item: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class ConstraintReport:
    checks: Dict[str, ConstraintCheck]

    @property
    def all_passed(self) -> bool:
        return all(check.passed for check in self.checks.values())

    def passed(self, name: str) -> bool:
        return self.checks[name].passed

    @property
    def rate_violations(self) -> int:
        return sum(1 for margin in self.checks["rate"].per_item if margin < 0)


def check_constraints(
    beams: BeamformingSet,
    coefficients: StarCoefficients,
    rates: RateReport | np.ndarray,
    cfg: SystemConfig,
) -> ConstraintReport:
    power = transmit_power(beams)
    power_margin = cfg.max_power - power

    split_deviation = np.abs(coefficients.beta_t + coefficients.beta_r - 1.0)
    amplitudes = np.concatenate([coefficients.beta_t, coefficients.beta_r])
    amplitude_excess = np.maximum(-amplitudes, amplitudes - 1.0).clip(min=0.0)
    worst_split = float(max(split_deviation.max(initial=0.0), amplitude_excess.max(initial=0.0)))

    phases = np.concatenate([coefficients.theta_t, coefficients.theta_r])
    phase_outside = (phases < 0) | (phases >= TWO_PI)
    phase_excess = np.where(phases < 0, -phases, np.maximum(phases - TWO_PI, 0.0))

    values = rates.rates if isinstance(rates, RateReport) else np.asarray(rates, dtype=float)
    rate_margins = values - cfg.min_rate

    checks = {
        "power": ConstraintCheck("power", power <= cfg.max_power + POWER_TOLERANCE, power_margin),
        "energy_split": ConstraintCheck(
            "energy_split", worst_split <= SPLIT_TOLERANCE, worst_split, split_deviation.tolist()
        ),
        "phase": ConstraintCheck(
            "phase", not bool(phase_outside.any()), float(phase_excess.max(initial=0.0)), phase_excess.tolist()
        ),
        "rate": ConstraintCheck(
            "rate", bool(np.all(rate_margins >= 0)), float(rate_margins.min(initial=np.inf)), rate_margins.tolist()
        ),
    }
    return ConstraintReport(checks)
