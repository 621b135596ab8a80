from __future__ import annotations

from typing import Callable

import numpy as np
import pytest

from app.config import AgentConfig, ChannelConfig, RunConfig, SystemConfig


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def make_system() -> Callable[..., SystemConfig]:
    """Small system factory; keyword arguments land on the channel or the system."""

    def factory(**overrides) -> SystemConfig:
        channel_fields = {k: overrides.pop(k) for k in list(overrides) if k in ChannelConfig.__dataclass_fields__}
        channel = ChannelConfig(
            **{"antennas": 2, "elements": 3, "users_t": 1, "users_r": 1, **channel_fields}
        )
        return SystemConfig(channel=channel, **overrides)

    return factory


@pytest.fixture
def small_agent_config() -> AgentConfig:
    return AgentConfig(hidden_units=8, batch_size=4, buffer_capacity=64)


@pytest.fixture
def tiny_run(make_system, small_agent_config) -> Callable[..., RunConfig]:
    """Training-sized RunConfig factory for loop and artifact tests."""

    def factory(**overrides) -> RunConfig:
        system = overrides.pop("system", None) or make_system()
        options = {"episodes": 2, "steps": 3, "seed": 7, "checkpoint_every": 1, **overrides}
        return RunConfig(system=system, agent=small_agent_config, **options).validate()

    return factory
