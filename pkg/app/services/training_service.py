"""DDPG training loop, greedy evaluation and resumable checkpoints."""
from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from app.config import RunConfig, SystemConfig
from app.errors import InvalidArgumentError, StarRisError
from app.numerics.checkpoint import load_document, save_document
from app.physics.channel import ChannelRealization, channels_from_document, channels_to_document
from app.services.agent_service import DdpgAgent, Experience, ReplayBuffer
from app.services.environment_service import StarRisEnvironment, StepResult, reward
from app.utils.csv_writer import CsvLog, header_of

LOGGER = logging.getLogger("starris.training")

CHECKPOINT_NAME = "checkpoint.json"


@dataclass(frozen=True)
class MetricsRow:
    episode: int
    mean_reward: float
    mean_ee: float
    min_rate: float
    mean_power: float
    violations: int


@dataclass(frozen=True)
class EvaluationRow:
    index: int
    mean_ee: float
    min_rate: float
    mean_power: float
    violations: int


class EpisodeTally:
    """Per-episode accumulator shared by training, evaluation and baselines."""

    def __init__(self) -> None:
        self.rewards: List[float] = []
        self.efficiencies: List[float] = []
        self.powers: List[float] = []
        self.min_rate = float("inf")
        self.violations = 0

    def add(self, scaled_reward: float, efficiency: float, min_rate: float, power: float, violated: bool) -> None:
        self.rewards.append(scaled_reward)
        self.efficiencies.append(efficiency)
        self.powers.append(power)
        self.min_rate = min(self.min_rate, min_rate)
        self.violations += int(violated)

    def metrics_row(self, episode: int) -> MetricsRow:
        return MetricsRow(
            episode=episode,
            mean_reward=float(np.mean(self.rewards)),
            mean_ee=float(np.mean(self.efficiencies)),
            min_rate=float(self.min_rate),
            mean_power=float(np.mean(self.powers)),
            violations=self.violations,
        )

    def evaluation_row(self, index: int) -> EvaluationRow:
        return EvaluationRow(
            index=index,
            mean_ee=float(np.mean(self.efficiencies)),
            min_rate=float(self.min_rate),
            mean_power=float(np.mean(self.powers)),
            violations=self.violations,
        )


@dataclass
class TrainingResult:
    rows: List[MetricsRow] = field(default_factory=list)
    checkpoint: Optional[Path] = None


def spawn_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent generators for channels, weight init, exploration and evaluation."""
    children = np.random.SeedSequence(seed).spawn(4)
    return {name: np.random.default_rng(child) for name, child in zip(("env", "init", "explore", "eval"), children)}


def progress_enabled(quiet: bool) -> bool:
    return not quiet and sys.stderr.isatty()


class TrainingService:
    def __init__(self, config: RunConfig, quiet: bool = False) -> None:
        if config.seed is None:
            raise InvalidArgumentError("training needs a seed")
        self.config = config
        self.quiet = quiet
        self.streams = spawn_streams(config.seed)
        self.env = StarRisEnvironment(config.system, self.streams["env"], reward_scale=config.agent.reward_scale)
        self.agent = DdpgAgent(
            self.env.state_dim,
            self.env.action_dim,
            config.agent,
            init_rng=self.streams["init"],
            explore_rng=self.streams["explore"],
        )
        self.buffer = ReplayBuffer(config.agent.buffer_capacity, self.env.state_dim, self.env.action_dim)
        self.rows: List[MetricsRow] = []
        self.next_episode = 0

    def train(self, metrics_path: Optional[Path] = None, checkpoint_path: Optional[Path] = None) -> TrainingResult:
        """Episode/step loop: explore, step, store, learn, soft-update."""
        cfg = self.config
        result = TrainingResult(rows=self.rows)
        log = CsvLog(metrics_path, header_of(MetricsRow)) if metrics_path else None
        try:
            if log:
                for row in self.rows:
                    log.append(row)
            episodes = tqdm(
                range(self.next_episode, cfg.episodes),
                desc="train",
                unit="ep",
                initial=self.next_episode,
                total=cfg.episodes,
                disable=not progress_enabled(self.quiet),
            )
            for episode in episodes:
                row = self._run_episode(episode)
                self.rows.append(row)
                self.next_episode = episode + 1
                if log:
                    log.append(row)
                LOGGER.info(
                    "Episode %d/%d reward=%.6f EE=%.1f min_rate=%.4f power=%.4f violations=%d",
                    episode + 1,
                    cfg.episodes,
                    row.mean_reward,
                    row.mean_ee,
                    row.min_rate,
                    row.mean_power,
                    row.violations,
                )
                if checkpoint_path and (self.next_episode % cfg.checkpoint_every == 0):
                    result.checkpoint = self.save_checkpoint(checkpoint_path)
        except StarRisError:
            LOGGER.exception("Training aborted during episode %d", self.next_episode + 1)
            raise
        finally:
            if log:
                log.close()
        if checkpoint_path:
            result.checkpoint = self.save_checkpoint(checkpoint_path)
        return result

    def _run_episode(self, episode: int) -> MetricsRow:
        state = self.env.reset()
        self.agent.noise.reset()
        requirement = self.rate_requirement(episode)
        tally = EpisodeTally()
        for step in range(self.config.steps):
            if len(self.buffer) < self.config.agent.warmup_steps:
                action = self.agent.random_action()
            else:
                action = self.agent.select_action(state, explore=True)
            outcome = self.env.step(action)
            self.buffer.store(Experience(state, action, self.learning_reward(outcome, requirement), outcome.state))
            losses = self.agent.learn(self.buffer)
            if losses is not None:
                LOGGER.debug("Episode %d step %d critic_loss=%.6g actor_q=%.6g", episode, step, *losses)
            tally.add(
                outcome.scaled_reward,
                outcome.efficiency,
                outcome.min_rate,
                outcome.power,
                not outcome.constraints.passed("rate"),
            )
            state = outcome.state
        return tally.metrics_row(episode)

    def rate_requirement(self, episode: int) -> float:
        """Rate floor of the stored reward; rises linearly from 0 to R_min over ``rate_ramp_episodes``."""
        ramp = self.config.agent.rate_ramp_episodes
        target = self.config.system.min_rate
        if episode >= ramp:
            return target
        return target * episode / ramp

    def learning_reward(self, outcome: StepResult, requirement: float) -> float:
        if requirement >= self.config.system.min_rate:
            return outcome.scaled_reward
        return reward(outcome.rates, outcome.efficiency, requirement) * self.env.reward_scale

    def evaluate(self, episodes: Optional[int] = None) -> List[EvaluationRow]:
        channels = None if self.config.channel.resample_each_episode else self.env.channels
        return evaluate_policy(
            self.agent,
            self.config.system,
            self.streams["eval"],
            episodes or self.config.eval_episodes,
            self.config.steps,
            channels=channels,
        )

    def save_checkpoint(self, path: Path) -> Path:
        payload: Dict[str, Any] = {
            "kind": "training",
            "episode": self.next_episode,
            "seed": self.config.seed,
            "agent": self.agent.state_dict(),
            "buffer": self.buffer.to_document(),
            "rng": {name: rng.bit_generator.state for name, rng in self.streams.items()},
            "rows": [[getattr(row, name) for name in header_of(MetricsRow)] for row in self.rows],
        }
        if self.env.has_channels:
            payload["channels"] = channels_to_document(self.env.channels)
        saved = save_document(path, payload)
        LOGGER.info("Checkpoint written to %s after episode %d", saved, self.next_episode)
        return saved

    def resume(self, path: Path) -> None:
        document = load_document(path)
        if document.get("kind") != "training":
            raise InvalidArgumentError(f"{path} is not a training checkpoint")
        self.agent.load_state_dict(document["agent"])
        self.buffer.load_document(document["buffer"])
        for name, state in document["rng"].items():
            self.streams[name].bit_generator.state = state
        if "channels" in document:
            self.env.use_channels(channels_from_document(document["channels"]))
        self.rows = [
            MetricsRow(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]), int(r[5]))
            for r in document["rows"]
        ]
        self.next_episode = int(document["episode"])
        LOGGER.info("Resumed from %s at episode %d", path, self.next_episode + 1)


def load_agent(path: Path, config: RunConfig, state_dim: int, action_dim: int) -> DdpgAgent:
    """Rebuild a trained agent from a checkpoint for greedy evaluation."""
    document = load_document(path)
    agent_document = document.get("agent", document)
    streams = spawn_streams(config.seed if config.seed is not None else 0)
    agent = DdpgAgent(state_dim, action_dim, config.agent, streams["init"], streams["explore"])
    agent.load_state_dict(agent_document)
    return agent


def evaluate_policy(
    agent: DdpgAgent,
    system: SystemConfig,
    rng: np.random.Generator,
    episodes: int,
    steps: int,
    channels: Optional[ChannelRealization] = None,
) -> List[EvaluationRow]:
    """Greedy rollouts on fresh seeded realizations (or on ``channels`` when pinned)."""
    env = StarRisEnvironment(system, rng)
    if channels is not None:
        env.use_channels(channels)
    rows: List[EvaluationRow] = []
    for index in range(episodes):
        state = env.reset()
        tally = EpisodeTally()
        for _ in range(steps):
            outcome = env.step(agent.select_action(state, explore=False))
            tally.add(outcome.reward, outcome.efficiency, outcome.min_rate, outcome.power, not outcome.constraints.passed("rate"))
            state = outcome.state
        rows.append(tally.evaluation_row(index))
    efficiencies = [row.mean_ee for row in rows]
    LOGGER.info("Greedy evaluation over %d realizations: EE %.1f +/- %.1f", episodes, np.mean(efficiencies), np.std(efficiencies))
    return rows
