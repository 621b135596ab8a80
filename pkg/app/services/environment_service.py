"""Reinforcement-learning environment around the STAR-RIS NOMA downlink."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from app.config import ChannelConfig, SystemConfig
from app.errors import DegenerateElementError, InvalidArgumentError, InvalidStateError
from app.physics.channel import ChannelRealization, sample_channels
from app.physics.noma import (
    BeamformingSet,
    ConstraintReport,
    RateReport,
    check_constraints,
    effective_channels,
    energy_efficiency,
    order_by_gain,
    rates_from_effective,
    transmit_power,
)
from app.physics.star import TWO_PI, StarCoefficients, wrap_phase

LOGGER = logging.getLogger("starris.env")


@dataclass(frozen=True)
class ActionLayout:
    """Flat action: [Re w | Im w | Re PhiT | Im PhiT | Re PhiR | Im PhiR], users row-major."""

    users: int
    antennas: int
    elements: int

    @classmethod
    def for_channel(cls, cfg: ChannelConfig) -> "ActionLayout":
        return cls(users=cfg.num_users, antennas=cfg.antennas, elements=cfg.elements)

    @property
    def beam_size(self) -> int:
        return self.users * self.antennas

    @property
    def size(self) -> int:
        return 2 * self.beam_size + 4 * self.elements

    @property
    def state_size(self) -> int:
        return self.users * (2 + self.antennas)


def decode_action(action: np.ndarray, layout: ActionLayout) -> Tuple[BeamformingSet, np.ndarray, np.ndarray]:
    values = np.asarray(action, dtype=np.float64).ravel()
    if values.shape[0] != layout.size:
        raise InvalidArgumentError(f"action length must be {layout.size}, got {values.shape[0]}")
    b, n = layout.beam_size, layout.elements
    real, imag = values[:b], values[b : 2 * b]
    beams = BeamformingSet((real + 1j * imag).reshape(layout.users, layout.antennas))
    offset = 2 * b
    diag_t = values[offset : offset + n] + 1j * values[offset + n : offset + 2 * n]
    diag_r = values[offset + 2 * n : offset + 3 * n] + 1j * values[offset + 3 * n : offset + 4 * n]
    return beams, diag_t, diag_r


def encode_action(beams: BeamformingSet, diag_t: np.ndarray, diag_r: np.ndarray) -> np.ndarray:
    flat = beams.vectors.ravel()
    return np.concatenate([flat.real, flat.imag, diag_t.real, diag_t.imag, diag_r.real, diag_r.imag])


def normalize_beamforming(raw: BeamformingSet, max_power: float) -> BeamformingSet:
    """Scale every user by lambda = P_hat / P with P_hat = P / (U * 2M) * P_max.

    2M is the largest squared norm a tanh-bounded beamformer can reach, so the
    total never exceeds P_max. A zero beamformer stays zero.
    """
    powers = raw.powers()
    capacity = raw.num_users * 2 * raw.antennas
    target = powers / capacity * max_power
    scale = np.zeros_like(powers)
    nonzero = powers > 0
    scale[nonzero] = target[nonzero] / powers[nonzero]
    return BeamformingSet(raw.vectors * np.sqrt(scale)[:, None])


def normalize_coefficients(diag_t: np.ndarray, diag_r: np.ndarray, strict: bool = False) -> StarCoefficients:
    """Keep each raw entry's phase and split energy in proportion to |entry|^2.

    Elements whose two raw entries are both zero fall back to an even split at
    phase 0, or raise DegenerateElementError when ``strict`` is set.
    """
    diag_t = np.asarray(diag_t, dtype=np.complex128)
    diag_r = np.asarray(diag_r, dtype=np.complex128)
    energy_t = np.abs(diag_t) ** 2
    energy_r = np.abs(diag_r) ** 2
    total = energy_t + energy_r
    degenerate = total == 0
    if np.any(degenerate):
        elements = [int(n) for n in np.flatnonzero(degenerate)]
        if strict:
            raise DegenerateElementError(elements)
        LOGGER.debug("Degenerate STAR-RIS elements %s fall back to an even split", elements)
    safe_total = np.where(degenerate, 1.0, total)
    beta_t = np.where(degenerate, 0.5, energy_t / safe_total)
    beta_r = 1.0 - beta_t
    theta_t = np.where(degenerate, 0.0, wrap_phase(np.angle(diag_t)))
    theta_r = np.where(degenerate, 0.0, wrap_phase(np.angle(diag_r)))
    return StarCoefficients(beta_t=beta_t, beta_r=beta_r, theta_t=theta_t, theta_r=theta_r)


def build_state(rates: RateReport | np.ndarray, beams: BeamformingSet, effective: np.ndarray) -> np.ndarray:
    """[rates (U) | beam powers (U) | per-antenna |g_u|^2 (U*M, user-major)]."""
    values = rates.rates if isinstance(rates, RateReport) else np.asarray(rates, dtype=float)
    return np.concatenate([values, beams.powers(), (np.abs(effective) ** 2).ravel()])


def reward(rates: RateReport | np.ndarray, efficiency: float, min_rate: float) -> float:
    """EE when every user meets ``min_rate``, otherwise -|min rate - R_min| * EE."""
    values = rates.rates if isinstance(rates, RateReport) else np.asarray(rates, dtype=float)
    lowest = float(np.min(values))
    if lowest >= min_rate:
        return float(efficiency)
    return -abs(lowest - min_rate) * float(efficiency)


@dataclass(frozen=True)
class StepResult:
    state: np.ndarray
    reward: float
    scaled_reward: float
    efficiency: float
    min_rate: float
    power: float
    constraints: ConstraintReport
    rates: RateReport
    beams: BeamformingSet
    coefficients: StarCoefficients


class StarRisEnvironment:
    """Single-threaded episode driver; channels stay fixed between resets."""

    def __init__(self, system: SystemConfig, rng: np.random.Generator, reward_scale: float = 1.0) -> None:
        system.validate()
        if reward_scale <= 0:
            raise InvalidArgumentError("reward scale must be > 0")
        self.system = system
        self.layout = ActionLayout.for_channel(system.channel)
        self.reward_scale = reward_scale
        self._rng = rng
        self._channels: ChannelRealization | None = None
        self._ready = False

    @property
    def state_dim(self) -> int:
        return self.layout.state_size

    @property
    def action_dim(self) -> int:
        return self.layout.size

    @property
    def rng(self) -> np.random.Generator:
        return self._rng

    @property
    def has_channels(self) -> bool:
        return self._channels is not None

    @property
    def channels(self) -> ChannelRealization:
        if self._channels is None:
            raise InvalidStateError("environment has no channel realization yet; call reset() first")
        return self._channels

    def use_channels(self, channels: ChannelRealization) -> None:
        """Pin a realization; later resets keep it unless resampling is enabled."""
        cfg = self.system.channel
        if (channels.elements, channels.antennas, channels.users_t, channels.users_r) != (
            cfg.elements,
            cfg.antennas,
            cfg.users_t,
            cfg.users_r,
        ):
            raise InvalidArgumentError("channel realization does not match the configured dimensions")
        self._channels = channels.validate()

    def reset(self) -> np.ndarray:
        cfg = self.system.channel
        if self._channels is None or cfg.resample_each_episode:
            self._channels = sample_channels(cfg, self._rng)
        n, users, m = cfg.elements, cfg.num_users, cfg.antennas
        theta_t = self._rng.uniform(0.0, TWO_PI, size=n)
        theta_r = self._rng.uniform(0.0, TWO_PI, size=n)
        coefficients = StarCoefficients.even_split(wrap_phase(theta_t), wrap_phase(theta_r))
        beams = random_full_power_beams(self._rng, users, m, self.system.max_power)
        self._ready = True
        return self.evaluate(beams, coefficients).state

    def step(self, action: np.ndarray) -> StepResult:
        if not self._ready:
            raise InvalidStateError("step() called before reset()")
        raw_beams, diag_t, diag_r = decode_action(action, self.layout)
        beams = normalize_beamforming(raw_beams, self.system.max_power)
        coefficients = normalize_coefficients(diag_t, diag_r)
        return self.evaluate(beams, coefficients)

    def evaluate(self, beams: BeamformingSet, coefficients: StarCoefficients) -> StepResult:
        """Score an already-normalized configuration on the current channels."""
        effective = effective_channels(self.channels, coefficients)
        order = order_by_gain(effective)
        rates = rates_from_effective(effective, beams, self.system.noise_power, order)
        power = transmit_power(beams)
        efficiency = energy_efficiency(rates, power, self.system)
        punished = reward(rates, efficiency, self.system.min_rate)
        constraints = check_constraints(beams, coefficients, rates, self.system)
        LOGGER.debug("EE=%.3f min_rate=%.4f power=%.6f reward=%.3f", efficiency, rates.min_rate, power, punished)
        return StepResult(
            state=build_state(rates, beams, effective),
            reward=punished,
            scaled_reward=punished * self.reward_scale,
            efficiency=efficiency,
            min_rate=rates.min_rate,
            power=power,
            constraints=constraints,
            rates=rates,
            beams=beams,
            coefficients=coefficients,
        )


def random_unit_directions(rng: np.random.Generator, count: int, antennas: int) -> np.ndarray:
    """``count`` complex unit vectors with isotropic directions."""
    raw = rng.standard_normal((count, antennas)) + 1j * rng.standard_normal((count, antennas))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def random_full_power_beams(rng: np.random.Generator, users: int, antennas: int, max_power: float) -> BeamformingSet:
    directions = random_unit_directions(rng, users, antennas)
    return BeamformingSet(directions * np.sqrt(max_power / users))
