"""DDPG agent: actor/critic pair, target networks, replay buffer and exploration noise."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from app.config import AgentConfig
from app.errors import InsufficientDataError, InvalidArgumentError, NumericError
from app.numerics.checkpoint import array_from_document, array_to_document, model_from_document, model_to_document
from app.numerics.mlp import (
    ACTION_BOUND,
    EVAL,
    TRAIN,
    ForwardCache,
    Gradients,
    MlpParameters,
    forward_pass,
    init_actor,
    init_critic,
    mlp_backward,
    mlp_forward,
    update_running_stats,
)
from app.numerics.optimizer import AdamOptimizer, AdamState

LOGGER = logging.getLogger("starris.agent")



@dataclass(frozen=True)
class Experience:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray


@dataclass(frozen=True)
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring; the oldest experience is overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int) -> None:
        if capacity < 1:
            raise InvalidArgumentError("replay capacity must be >= 1")
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._states = np.zeros((capacity, state_dim))
        self._actions = np.zeros((capacity, action_dim))
        self._rewards = np.zeros(capacity)
        self._next_states = np.zeros((capacity, state_dim))
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def store(self, experience: Experience) -> None:
        state = np.asarray(experience.state, dtype=np.float64).ravel()
        action = np.asarray(experience.action, dtype=np.float64).ravel()
        next_state = np.asarray(experience.next_state, dtype=np.float64).ravel()
        if state.shape[0] != self.state_dim or next_state.shape[0] != self.state_dim:
            raise InvalidArgumentError(f"state length must be {self.state_dim}")
        if action.shape[0] != self.action_dim:
            raise InvalidArgumentError(f"action length must be {self.action_dim}")
        slot = self._cursor
        self._states[slot] = state
        self._actions[slot] = action
        self._rewards[slot] = float(experience.reward)
        self._next_states[slot] = next_state
        self._cursor = (slot + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size < batch_size:
            raise InsufficientDataError(f"buffer holds {self._size} experiences, {batch_size} requested")
        indices = rng.choice(self._size, size=batch_size, replace=False)
        return Batch(
            states=self._states[indices],
            actions=self._actions[indices],
            rewards=self._rewards[indices],
            next_states=self._next_states[indices],
            indices=indices,
        )

    def experiences(self) -> list[Experience]:
        """Stored experiences from oldest to newest."""
        start = self._cursor if self._size == self.capacity else 0
        order = [(start + k) % self.capacity for k in range(self._size)]
        return [
            Experience(self._states[i].copy(), self._actions[i].copy(), float(self._rewards[i]), self._next_states[i].copy())
            for i in order
        ]

    def to_document(self) -> Dict[str, Any]:
        used = slice(0, self._size)
        return {
            "capacity": self.capacity,
            "cursor": self._cursor,
            "size": self._size,
            "states": array_to_document(self._states[used]),
            "actions": array_to_document(self._actions[used]),
            "rewards": array_to_document(self._rewards[used]),
            "next_states": array_to_document(self._next_states[used]),
        }

    def load_document(self, document: Dict[str, Any]) -> None:
        if int(document["capacity"]) != self.capacity:
            raise InvalidArgumentError("replay buffer capacity differs from the checkpoint")
        size = int(document["size"])
        self._states[:size] = array_from_document(document["states"])
        self._actions[:size] = array_from_document(document["actions"])
        self._rewards[:size] = array_from_document(document["rewards"])
        self._next_states[:size] = array_from_document(document["next_states"])
        self._cursor = int(document["cursor"])
        self._size = size


class GaussianNoise:
    """Zero-mean Gaussian noise whose sigma decays per draw down to a floor."""

    kind = "gaussian"

    def __init__(self, dim: int, sigma: float, decay: float = 1.0, floor: float = 0.0) -> None:
        self.dim = dim
        self.sigma = sigma
        self.decay = decay
        self.floor = floor

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        draw = self.sigma * rng.standard_normal(self.dim)
        self._decay()
        return draw

    def reset(self) -> None:
        pass

    def _decay(self) -> None:
        self.sigma = max(self.sigma * self.decay, min(self.floor, self.sigma))

    def state(self) -> Dict[str, Any]:
        return {"kind": self.kind, "sigma": self.sigma}

    def load_state(self, state: Dict[str, Any]) -> None:
        self.sigma = float(state["sigma"])


class OUNoise(GaussianNoise):
    """Ornstein-Uhlenbeck process around zero, reset at every episode."""

    kind = "ou"

    def __init__(self, dim: int, sigma: float, decay: float = 1.0, floor: float = 0.0, theta: float = 0.15) -> None:
        super().__init__(dim, sigma, decay, floor)
        self.theta = theta
        self.value = np.zeros(dim)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        self.value = self.value - self.theta * self.value + self.sigma * rng.standard_normal(self.dim)
        self._decay()
        return self.value.copy()

    def reset(self) -> None:
        self.value = np.zeros(self.dim)

    def state(self) -> Dict[str, Any]:
        return {"kind": self.kind, "sigma": self.sigma, "value": array_to_document(self.value)}

    def load_state(self, state: Dict[str, Any]) -> None:
        super().load_state(state)
        self.value = array_from_document(state["value"])


def build_noise(cfg: AgentConfig, dim: int) -> GaussianNoise:
    if cfg.noise_kind == "ou":
        return OUNoise(dim, cfg.noise_sigma, cfg.noise_decay, cfg.noise_floor, cfg.ou_theta)
    return GaussianNoise(dim, cfg.noise_sigma, cfg.noise_decay, cfg.noise_floor)


class DdpgAgent:
    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        cfg: AgentConfig,
        init_rng: np.random.Generator,
        explore_rng: np.random.Generator,
    ) -> None:
        cfg.validate()
        self.cfg = cfg
        self.state_dim = state_dim
        self.action_dim = action_dim
        net_options = dict(bn_momentum=cfg.bn_momentum, bn_eps=cfg.bn_eps)
        self.actor = init_actor(state_dim, action_dim, cfg.hidden_units, init_rng, **net_options)
        self.critic = init_critic(state_dim, action_dim, cfg.hidden_units, init_rng, **net_options)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_optimizer = AdamOptimizer(self.actor, cfg.actor_lr)
        self.critic_optimizer = AdamOptimizer(self.critic, cfg.critic_lr)
        self.noise = build_noise(cfg, action_dim)
        self.rng = explore_rng

    def select_action(self, state: np.ndarray, explore: bool = False) -> np.ndarray:
        action = mlp_forward(self.actor, np.asarray(state, dtype=np.float64).reshape(1, -1), EVAL)[0]
        if not explore:
            return action
        return np.clip(action + self.noise.sample(self.rng), -ACTION_BOUND, ACTION_BOUND)

    @property
    def warmup_size(self) -> int:
        """Buffer fill below which ``learn`` skips updates."""
        return max(self.cfg.batch_size, self.cfg.warmup_steps)

    def random_action(self) -> np.ndarray:
        """Uniform draw from the action box, used while the buffer fills during warm-up."""
        return self.rng.uniform(-ACTION_BOUND, ACTION_BOUND, self.action_dim)

    def update_critic(self, batch: Batch) -> float:
        """One MSE descent step toward r + discount * Q'(s', mu'(s')); returns the pre-step loss."""
        next_actions = mlp_forward(self.target_actor, batch.next_states, EVAL)
        next_q = mlp_forward(self.target_critic, np.hstack([batch.next_states, next_actions]), EVAL)
        targets = batch.rewards.reshape(-1, 1) + self.cfg.discount * next_q
        inputs = np.hstack([batch.states, batch.actions])
        q, cache = forward_pass(self.critic, inputs, TRAIN, track_stats=False)
        residual = q - targets
        loss = float(np.mean(residual**2))
        if not np.isfinite(loss):
            raise NumericError("critic loss is not finite")
        grads = mlp_backward(self.critic, inputs, 2.0 * residual / len(batch), cache=cache)
        self.critic_optimizer.step(self.critic, grads)
        update_running_stats(self.critic, cache)
        return loss

    def actor_gradient(self, states: np.ndarray) -> Tuple[float, Gradients, ForwardCache]:
        """Mean Q(s, mu(s)) over the states and its gradient with respect to the actor parameters."""
        actions, actor_cache = forward_pass(self.actor, states, TRAIN, track_stats=False)
        inputs = np.hstack([states, actions])
        q, critic_cache = forward_pass(self.critic, inputs, TRAIN, track_stats=False)
        critic_grads = mlp_backward(self.critic, inputs, np.full_like(q, 1.0 / len(states)), cache=critic_cache)
        action_grads = critic_grads.inputs[:, self.state_dim :]
        actor_grads = mlp_backward(self.actor, states, action_grads, cache=actor_cache)
        return float(np.mean(q)), actor_grads, actor_cache

    def update_actor(self, batch: Batch) -> float:
        """One ascent step on mean Q(s, mu(s)); the critic is left untouched."""
        objective, actor_grads, actor_cache = self.actor_gradient(batch.states)
        if not actor_grads.is_finite():
            raise NumericError("actor gradient is not finite")
        self.actor_optimizer.step(self.actor, actor_grads, ascend=True)
        update_running_stats(self.actor, actor_cache)
        return objective

    def soft_update(self, tau: Optional[float] = None) -> None:
        tau = self.cfg.soft_update_rate if tau is None else tau
        if not 0 < tau <= 1:
            raise InvalidArgumentError(f"soft-update rate must lie in (0, 1], got {tau}")
        for online, target in ((self.actor, self.target_actor), (self.critic, self.target_critic)):
            _blend(target, online, tau)

    def learn(self, buffer: ReplayBuffer) -> Optional[Tuple[float, float]]:
        """Critic step, actor step, soft update; None while the buffer is warming up."""
        if len(buffer) < self.warmup_size:
            LOGGER.debug("Warm-up: %d/%d experiences, update skipped", len(buffer), self.warmup_size)
            return None
        batch = buffer.sample(self.cfg.batch_size, self.rng)
        critic_loss = self.update_critic(batch)
        actor_objective = self.update_actor(batch)
        self.soft_update()
        return critic_loss, actor_objective

    def state_dict(self) -> Dict[str, Any]:
        return {
            "actor": model_to_document(self.actor),
            "critic": model_to_document(self.critic),
            "target_actor": model_to_document(self.target_actor),
            "target_critic": model_to_document(self.target_critic),
            "actor_optimizer": _adam_to_document(self.actor_optimizer.state),
            "critic_optimizer": _adam_to_document(self.critic_optimizer.state),
            "noise": self.noise.state(),
        }

    def load_state_dict(self, document: Dict[str, Any]) -> None:
        actor = model_from_document(document["actor"])
        if (actor.state_dim, actor.action_dim) != (self.state_dim, self.action_dim):
            raise InvalidArgumentError(
                f"checkpoint networks are {actor.state_dim}->{actor.action_dim}, "
                f"environment needs {self.state_dim}->{self.action_dim}"
            )
        self.actor = actor
        self.critic = model_from_document(document["critic"])
        self.target_actor = model_from_document(document["target_actor"])
        self.target_critic = model_from_document(document["target_critic"])
        if "actor_optimizer" in document:
            self.actor_optimizer.state = _adam_from_document(document["actor_optimizer"])
            self.critic_optimizer.state = _adam_from_document(document["critic_optimizer"])
        if "noise" in document:
            if document["noise"].get("kind") != self.noise.kind:
                raise InvalidArgumentError("checkpoint noise kind differs from the configuration")
            self.noise.load_state(document["noise"])


def _blend(target: MlpParameters, online: MlpParameters, tau: float) -> None:
    for store_name in ("params", "buffers"):
        target_store = getattr(target, store_name)
        for name, value in getattr(online, store_name).items():
            target_store[name] = tau * value + (1.0 - tau) * target_store[name]


def _adam_to_document(state: AdamState) -> Dict[str, Any]:
    return {
        "t": state.t,
        "m": {name: array_to_document(v) for name, v in state.m.items()},
        "v": {name: array_to_document(v) for name, v in state.v.items()},
    }


def _adam_from_document(document: Dict[str, Any]) -> AdamState:
    return AdamState(
        m={name: array_from_document(v) for name, v in document["m"].items()},
        v={name: array_from_document(v) for name, v in document["v"].items()},
        t=int(document["t"]),
    )
