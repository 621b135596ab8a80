"""Reference policies: random STAR-RIS coefficients and an exhaustive grid oracle.

The oracle evaluates rates and EE with its own vectorized code (einsum over a
chunk of grid points) so it can cross-check ``app.physics.noma``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from app.config import GridSpec, SystemConfig
from app.errors import BudgetExceededError, InvalidArgumentError
from app.physics.channel import ChannelRealization
from app.physics.noma import BeamformingSet
from app.physics.star import TWO_PI, StarCoefficients
from app.services.environment_service import StarRisEnvironment, random_full_power_beams, random_unit_directions
from app.services.training_service import EpisodeTally, MetricsRow
from app.utils.csv_writer import CsvLog

LOGGER = logging.getLogger("starris.baselines")

CHUNK_SIZE = 1 << 16


def random_coefficients_policy(
    env: StarRisEnvironment, episodes: int, steps: int, rng: np.random.Generator
) -> List[MetricsRow]:
    """Uniform phases, uniform splits and full-power random beams at every step."""
    cfg = env.system.channel
    rows: List[MetricsRow] = []
    for episode in range(episodes):
        env.reset()
        tally = EpisodeTally()
        for _ in range(steps):
            theta_t = rng.uniform(0.0, TWO_PI, size=cfg.elements)
            theta_r = rng.uniform(0.0, TWO_PI, size=cfg.elements)
            beta_t = rng.uniform(0.0, 1.0, size=cfg.elements)
            coefficients = StarCoefficients(beta_t, 1.0 - beta_t, theta_t, theta_r)
            beams = random_full_power_beams(rng, cfg.num_users, cfg.antennas, env.system.max_power)
            outcome = env.evaluate(beams, coefficients)
            tally.add(
                outcome.scaled_reward,
                outcome.efficiency,
                outcome.min_rate,
                outcome.power,
                not outcome.constraints.passed("rate"),
            )
        row = tally.metrics_row(episode)
        rows.append(row)
        LOGGER.info("Random baseline episode %d/%d EE=%.1f min_rate=%.4f", episode + 1, episodes, row.mean_ee, row.min_rate)
    return rows


@dataclass(frozen=True)
class GridPoint:
    index: int
    efficiency: float
    rates: np.ndarray
    feasible: bool


@dataclass(frozen=True)
class OracleResult:
    best: Optional[GridPoint]
    best_unconstrained: GridPoint
    size: int

    @property
    def best_efficiency(self) -> float:
        """Feasible maximum, 0 when no grid point meets the rate floor."""
        return self.best.efficiency if self.best is not None else 0.0


class GridOracle:
    """Mixed-radix grid over (theta_T, theta_R, split) per element then (power, direction) per user."""

    def __init__(self, channels: ChannelRealization, system: SystemConfig, grid: GridSpec) -> None:
        grid.validate()
        self.channels = channels.validate()
        self.system = system
        self.grid = grid
        n, users = channels.elements, channels.num_users
        self.dims: Tuple[int, ...] = (grid.phase_levels, grid.phase_levels, grid.split_levels) * n + (
            grid.power_levels,
            grid.directions,
        ) * users
        self.size = int(np.prod(self.dims, dtype=object))
        self.phases = TWO_PI * np.arange(grid.phase_levels) / grid.phase_levels
        self.splits = np.linspace(0.0, 1.0, grid.split_levels) if grid.split_levels > 1 else np.array([0.5])
        self.power_steps = (np.arange(grid.power_levels) + 1) / grid.power_levels * system.max_power / users
        self.directions = np.stack(
            [direction_set(grid.direction_seed, u, grid.directions, channels.antennas) for u in range(users)]
        )

    def column_names(self) -> List[str]:
        names: List[str] = []
        for n in range(self.channels.elements):
            names += [f"theta_t_{n}", f"theta_r_{n}", f"split_{n}"]
        for u in range(self.channels.num_users):
            names += [f"power_{u}", f"direction_{u}"]
        return names

    def digits(self, indices: np.ndarray) -> np.ndarray:
        """(K, len(dims)) digit matrix, last dimension fastest."""
        return np.stack(np.unravel_index(np.asarray(indices, dtype=np.int64), self.dims), axis=1)

    def configuration(self, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        n, users = self.channels.elements, self.channels.num_users
        digits = self.digits(indices)
        element_digits = digits[:, : 3 * n].reshape(-1, n, 3)
        user_digits = digits[:, 3 * n :].reshape(-1, users, 2)
        theta_t = self.phases[element_digits[:, :, 0]]
        theta_r = self.phases[element_digits[:, :, 1]]
        beta_t = self.splits[element_digits[:, :, 2]]
        powers = self.power_steps[user_digits[:, :, 0]]
        chosen = self.directions[np.arange(users)[None, :], user_digits[:, :, 1]]
        beams = np.sqrt(powers)[:, :, None] * chosen
        return theta_t, theta_r, beta_t, 1.0 - beta_t, beams

    def decode_point(self, index: int) -> Tuple[StarCoefficients, BeamformingSet]:
        if not 0 <= index < self.size:
            raise InvalidArgumentError(f"grid index {index} outside [0, {self.size})")
        theta_t, theta_r, beta_t, beta_r, beams = self.configuration(np.array([index]))
        return StarCoefficients(beta_t[0], beta_r[0], theta_t[0], theta_r[0]), BeamformingSet(beams[0])

    def evaluate(self, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Rates (K, U), EE (K,) and feasibility (K,) for the given grid indices."""
        theta_t, theta_r, beta_t, beta_r, beams = self.configuration(indices)
        diag_t = np.sqrt(beta_t) * np.exp(1j * theta_t)
        diag_r = np.sqrt(beta_r) * np.exp(1j * theta_r)
        users_t = self.channels.users_t
        zone_diag = np.concatenate(
            [
                np.repeat(diag_t[:, None, :], users_t, axis=1),
                np.repeat(diag_r[:, None, :], self.channels.num_users - users_t, axis=1),
            ],
            axis=1,
        )
        effective = np.einsum("un,kun,nm->kum", np.conj(self.channels.h), zone_diag, self.channels.G)
        received = np.abs(np.einsum("kjm,kim->kji", effective, beams)) ** 2

        gains = np.sum(np.abs(effective) ** 2, axis=2)
        order = np.argsort(gains, axis=1, kind="stable")
        rank = np.empty_like(order)
        np.put_along_axis(rank, order, np.arange(order.shape[1])[None, :].repeat(order.shape[0], axis=0), axis=1)

        later = (rank[:, None, :] > rank[:, :, None]).astype(float)  # later[k, i, z]
        interference = np.einsum("kjz,kiz->kji", received, later)
        pair = np.log2(1.0 + received / (interference + self.system.noise_power))
        decodes = rank[:, :, None] >= rank[:, None, :]  # decoder j at or after user i
        rates = np.where(decodes, pair, np.inf).min(axis=1)

        power = np.sum(np.abs(beams) ** 2, axis=(1, 2))
        efficiency = self.system.bandwidth * rates.sum(axis=1) / (
            power / self.system.amplifier_efficiency + self.system.static_power
        )
        feasible = rates.min(axis=1) >= self.system.min_rate
        return rates, efficiency, feasible

    def search(self, table_path: Optional[Path] = None) -> OracleResult:
        budget = self.grid.budget
        if self.size > budget:
            raise BudgetExceededError(f"grid has {self.size} points, budget is {budget}")
        LOGGER.info("Oracle grid: %d points over %d dimensions, %d worker(s)", self.size, len(self.dims), self.grid.workers)
        if table_path is not None:
            return self._search_range(0, self.size, CsvLog(table_path, self._table_header()))
        bounds = np.linspace(0, self.size, self.grid.workers + 1).astype(np.int64)
        ranges = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        if len(ranges) == 1:
            return self._search_range(*ranges[0])
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            partials = list(pool.map(lambda span: self._search_range(*span), ranges))
        return _merge(partials, self.size)

    def _search_range(self, start: int, stop: int, table: Optional[CsvLog] = None) -> OracleResult:
        best: Optional[GridPoint] = None
        best_any: Optional[GridPoint] = None
        try:
            for lo in range(start, stop, CHUNK_SIZE):
                indices = np.arange(lo, min(lo + CHUNK_SIZE, stop), dtype=np.int64)
                rates, efficiency, feasible = self.evaluate(indices)
                if table is not None:
                    self._write_rows(table, indices, rates, efficiency, feasible)
                k = int(np.argmax(efficiency))
                best_any = _better(best_any, GridPoint(int(indices[k]), float(efficiency[k]), rates[k], bool(feasible[k])))
                if np.any(feasible):
                    masked = np.where(feasible, efficiency, -np.inf)
                    k = int(np.argmax(masked))
                    best = _better(best, GridPoint(int(indices[k]), float(efficiency[k]), rates[k], True))
        finally:
            if table is not None:
                table.close()
        if best_any is None:
            raise InvalidArgumentError("empty grid range")
        return OracleResult(best=best, best_unconstrained=best_any, size=stop - start)

    def _table_header(self) -> List[str]:
        rates = [f"rate_{u}" for u in range(self.channels.num_users)]
        return ["index", *self.column_names(), *rates, "ee", "feasible"]

    def _write_rows(
        self, table: CsvLog, indices: np.ndarray, rates: np.ndarray, efficiency: np.ndarray, feasible: np.ndarray
    ) -> None:
        digits = self.digits(indices)
        for k, index in enumerate(indices):
            table.append(
                [int(index), *(int(d) for d in digits[k]), *(float(r) for r in rates[k]), float(efficiency[k]), bool(feasible[k])]
            )


def direction_set(seed: int, user: int, count: int, antennas: int) -> np.ndarray:
    """Unit beam directions for one user, drawn one at a time.

    A larger ``count`` extends the set without changing its prefix, so finer
    grids contain every point of coarser ones.
    """
    rng = np.random.default_rng([seed, user])
    rows = [random_unit_directions(rng, 1, antennas)[0] for _ in range(count)]
    return np.stack(rows)


def grid_oracle(
    channels: ChannelRealization, system: SystemConfig, grid: GridSpec, table_path: Optional[Path] = None
) -> OracleResult:
    return GridOracle(channels, system, grid).search(table_path)


def _better(current: Optional[GridPoint], candidate: GridPoint) -> GridPoint:
    """Higher EE wins; equal EE keeps the lower grid index."""
    if current is None:
        return candidate
    if candidate.efficiency > current.efficiency or (
        candidate.efficiency == current.efficiency and candidate.index < current.index
    ):
        return candidate
    return current


def _merge(partials: List[OracleResult], size: int) -> OracleResult:
    best: Optional[GridPoint] = None
    best_any: Optional[GridPoint] = None
    for partial in partials:
        if partial.best is not None:
            best = _better(best, partial.best)
        best_any = _better(best_any, partial.best_unconstrained)
    assert best_any is not None
    return OracleResult(best=best, best_unconstrained=best_any, size=size)
