from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from app.config import AgentConfig
from app.errors import InsufficientDataError, InvalidArgumentError
from app.numerics.mlp import EVAL, TRAIN, init_actor, init_critic, mlp_forward
from app.numerics.optimizer import AdamState
from app.services.agent_service import (
    ACTION_BOUND,
    Batch,
    DdpgAgent,
    Experience,
    GaussianNoise,
    OUNoise,
    ReplayBuffer,
    build_noise,
)

STATE_DIM = 3
ACTION_DIM = 2


def experience(tag: float) -> Experience:
    return Experience(np.full(STATE_DIM, tag), np.full(ACTION_DIM, tag / 10), tag, np.full(STATE_DIM, tag + 1))


def make_agent(cfg: AgentConfig, seed: int = 0) -> DdpgAgent:
    return DdpgAgent(STATE_DIM, ACTION_DIM, cfg, np.random.default_rng(seed), np.random.default_rng(seed + 1))


def random_batch(rng: np.random.Generator, size: int = 8) -> Batch:
    return Batch(
        states=rng.standard_normal((size, STATE_DIM)),
        actions=rng.uniform(-1, 1, (size, ACTION_DIM)),
        rewards=rng.uniform(0, 1, size),
        next_states=rng.standard_normal((size, STATE_DIM)),
        indices=np.arange(size),
    )


class TestReplayBuffer:
    def test_store_one(self):
        buffer = ReplayBuffer(4, STATE_DIM, ACTION_DIM)
        buffer.store(experience(1.0))
        assert len(buffer) == 1

    def test_oldest_is_overwritten(self):
        buffer = ReplayBuffer(3, STATE_DIM, ACTION_DIM)
        for tag in range(1, 6):
            buffer.store(experience(float(tag)))
        assert len(buffer) == 3
        assert [e.reward for e in buffer.experiences()] == [3.0, 4.0, 5.0]

    def test_sample_is_distinct(self, rng):
        buffer = ReplayBuffer(10, STATE_DIM, ACTION_DIM)
        for tag in range(10):
            buffer.store(experience(float(tag)))
        batch = buffer.sample(6, rng)
        assert len(set(batch.indices.tolist())) == 6
        np.testing.assert_array_equal(batch.states[:, 0], batch.rewards)

    def test_sample_everything(self, rng):
        buffer = ReplayBuffer(5, STATE_DIM, ACTION_DIM)
        for tag in range(4):
            buffer.store(experience(float(tag)))
        assert sorted(buffer.sample(4, rng).rewards.tolist()) == [0.0, 1.0, 2.0, 3.0]

    def test_sample_too_many(self, rng):
        buffer = ReplayBuffer(5, STATE_DIM, ACTION_DIM)
        buffer.store(experience(1.0))
        with pytest.raises(InsufficientDataError):
            buffer.sample(2, rng)

    def test_sampling_is_uniform(self):
        buffer = ReplayBuffer(10, STATE_DIM, ACTION_DIM)
        for tag in range(10):
            buffer.store(experience(float(tag)))
        rng = np.random.default_rng(0)
        counts = np.zeros(10)
        for _ in range(100000):
            counts[buffer.sample(1, rng).indices[0]] += 1
        np.testing.assert_allclose(counts / 100000, 0.1, atol=0.01)

    def test_shape_mismatch(self):
        buffer = ReplayBuffer(5, STATE_DIM, ACTION_DIM)
        with pytest.raises(InvalidArgumentError):
            buffer.store(Experience(np.zeros(2), np.zeros(ACTION_DIM), 0.0, np.zeros(STATE_DIM)))

    def test_document_round_trip(self, rng):
        buffer = ReplayBuffer(3, STATE_DIM, ACTION_DIM)
        for tag in range(5):
            buffer.store(experience(float(tag)))
        restored = ReplayBuffer(3, STATE_DIM, ACTION_DIM)
        restored.load_document(buffer.to_document())
        assert [e.reward for e in restored.experiences()] == [2.0, 3.0, 4.0]
        restored.store(experience(9.0))
        assert [e.reward for e in restored.experiences()] == [3.0, 4.0, 9.0]


class TestNoise:
    def test_sigma_decays_to_floor(self, rng):
        noise = GaussianNoise(2, sigma=0.1, decay=0.5, floor=0.02)
        for _ in range(10):
            noise.sample(rng)
        assert noise.sigma == pytest.approx(0.02)

    def test_zero_sigma_is_silent(self, rng):
        np.testing.assert_array_equal(GaussianNoise(3, sigma=0.0).sample(rng), 0.0)

    def test_ou_reset(self, rng):
        noise = OUNoise(2, sigma=0.3)
        noise.sample(rng)
        noise.reset()
        np.testing.assert_array_equal(noise.value, 0.0)

    def test_build_noise(self):
        assert isinstance(build_noise(AgentConfig(noise_kind="ou"), 2), OUNoise)
        assert build_noise(AgentConfig(), 2).kind == "gaussian"


class TestActionSelection:
    def test_greedy_action_is_deterministic(self, small_agent_config):
        agent = make_agent(small_agent_config)
        state = np.array([0.1, -0.2, 0.3])
        np.testing.assert_array_equal(agent.select_action(state), agent.select_action(state))

    def test_silent_noise_equals_greedy(self, small_agent_config):
        agent = make_agent(replace(small_agent_config, noise_sigma=0.0))
        state = np.array([0.1, -0.2, 0.3])
        np.testing.assert_array_equal(agent.select_action(state, explore=True), agent.select_action(state))

    def test_exploration_noise_is_zero_mean(self, small_agent_config):
        agent = make_agent(replace(small_agent_config, noise_sigma=0.2, noise_decay=1.0))
        state = np.array([0.1, -0.2, 0.3])
        greedy = agent.select_action(state)
        draws = np.array([agent.select_action(state, explore=True) for _ in range(10000)])
        np.testing.assert_allclose(draws.mean(axis=0), greedy, atol=0.01)

    def test_explored_actions_stay_in_bounds(self, small_agent_config):
        agent = make_agent(replace(small_agent_config, noise_sigma=5.0, noise_decay=1.0))
        draws = np.array([agent.select_action(np.zeros(STATE_DIM), explore=True) for _ in range(200)])
        assert np.all(np.abs(draws) <= ACTION_BOUND)

    def test_silent_noise_equals_greedy_at_saturation(self, small_agent_config):
        agent = make_agent(replace(small_agent_config, noise_sigma=0.0))
        agent.actor.params["out.bias"][...] = [40.0, -40.0]
        state = np.array([0.1, -0.2, 0.3])
        greedy = agent.select_action(state)
        np.testing.assert_array_equal(greedy, [ACTION_BOUND, -ACTION_BOUND])
        np.testing.assert_array_equal(agent.select_action(state, explore=True), greedy)


class TestCriticUpdate:
    def test_returns_mean_squared_error(self, small_agent_config, rng):
        agent = make_agent(small_agent_config)
        batch = random_batch(rng)
        next_q = mlp_forward(
            agent.target_critic,
            np.hstack([batch.next_states, mlp_forward(agent.target_actor, batch.next_states, EVAL)]),
            EVAL,
        )
        targets = batch.rewards.reshape(-1, 1) + agent.cfg.discount * next_q
        q = mlp_forward(agent.critic, np.hstack([batch.states, batch.actions]), TRAIN, track_stats=False)
        expected = float(np.mean((q - targets) ** 2))
        assert agent.update_critic(batch) == pytest.approx(expected, rel=1e-12)

    def test_fitted_critic_stays_put(self, small_agent_config, rng):
        agent = make_agent(replace(small_agent_config, discount=0.0))
        for critic in (agent.critic, agent.target_critic):
            critic.params["out.weight"][...] = 0.0
            critic.params["out.bias"][...] = 0.7
        batch = replace(random_batch(rng), rewards=np.full(8, 0.7))
        before = {k: v.copy() for k, v in agent.critic.params.items()}
        assert agent.update_critic(batch) == pytest.approx(0.0, abs=1e-24)
        for name, value in before.items():
            np.testing.assert_array_equal(agent.critic.params[name], value)

    def test_overfits_a_fixed_batch(self, rng):
        cfg = AgentConfig(hidden_units=32, critic_lr=0.005, discount=0.0, batch_size=32, buffer_capacity=64)
        agent = make_agent(cfg)
        batch = random_batch(rng, size=32)
        loss = agent.update_critic(batch)
        for _ in range(2000):
            loss = agent.update_critic(batch)
            if loss < 1e-3:
                break
        assert loss < 1e-3

    def test_actor_untouched(self, small_agent_config, rng):
        agent = make_agent(small_agent_config)
        before = agent.actor.copy()
        agent.update_critic(random_batch(rng))
        for name in before.params:
            np.testing.assert_array_equal(agent.actor.params[name], before.params[name])


class TestActorUpdate:
    def test_action_blind_critic_leaves_actor(self, small_agent_config, rng):
        agent = make_agent(small_agent_config)
        agent.critic.params["action_fc.weight"][...] = 0.0
        agent.critic.params["action_fc.bias"][...] = 0.0
        before = agent.actor.copy()
        agent.update_actor(random_batch(rng))
        for name in before.params:
            np.testing.assert_array_equal(agent.actor.params[name], before.params[name])

    def test_critic_untouched(self, small_agent_config, rng):
        agent = make_agent(small_agent_config)
        before = agent.critic.copy()
        agent.update_actor(random_batch(rng))
        for name in before.params:
            np.testing.assert_array_equal(agent.critic.params[name], before.params[name])
        for name in before.buffers:
            np.testing.assert_array_equal(agent.critic.buffers[name], before.buffers[name])

    def test_small_steps_raise_mean_q(self, rng):
        agent = make_agent(AgentConfig(hidden_units=8, actor_lr=1e-5, batch_size=8, buffer_capacity=16))
        agent.actor = init_actor(STATE_DIM, ACTION_DIM, 8, np.random.default_rng(3), final_scale=0.5)
        agent.critic = init_critic(STATE_DIM, ACTION_DIM, 8, np.random.default_rng(4), final_scale=0.5)
        agent.actor_optimizer.state = AdamState.for_model(agent.actor)
        batch = random_batch(rng)
        objectives = [agent.update_actor(batch) for _ in range(11)]
        assert np.all(np.diff(objectives) >= -1e-12)
        assert objectives[-1] > objectives[0]

    def test_policy_gradient_matches_finite_differences(self, rng):
        agent = make_agent(AgentConfig(hidden_units=4, batch_size=6, buffer_capacity=16))
        agent.actor = init_actor(STATE_DIM, ACTION_DIM, 4, np.random.default_rng(5), final_scale=0.5)
        agent.critic = init_critic(STATE_DIM, ACTION_DIM, 4, np.random.default_rng(6), final_scale=0.5)
        states = rng.standard_normal((6, STATE_DIM))

        def mean_q() -> float:
            actions = mlp_forward(agent.actor, states, TRAIN, track_stats=False)
            return float(np.mean(mlp_forward(agent.critic, np.hstack([states, actions]), TRAIN, track_stats=False)))

        objective, grads, _ = agent.actor_gradient(states)
        assert objective == pytest.approx(mean_q(), rel=1e-12)
        for name, values in agent.actor.params.items():
            for index in np.ndindex(values.shape):
                original = values[index]
                values[index] = original + 1e-6
                plus = mean_q()
                values[index] = original - 1e-6
                minus = mean_q()
                values[index] = original
                numeric = (plus - minus) / 2e-6
                analytic = grads.params[name][index]
                assert abs(analytic - numeric) <= 1e-4 * max(abs(analytic), abs(numeric)) + 1e-9, name


class TestSoftUpdate:
    def test_full_copy(self, small_agent_config):
        agent = make_agent(small_agent_config)
        for value in agent.actor.params.values():
            value += 1.0
        agent.soft_update(1.0)
        for name, value in agent.actor.params.items():
            np.testing.assert_array_equal(agent.target_actor.params[name], value)

    def test_blend(self, small_agent_config):
        agent = make_agent(small_agent_config)
        agent.actor.params["out.bias"][...] = 1.0
        agent.target_actor.params["out.bias"][...] = 0.0
        agent.soft_update(0.005)
        np.testing.assert_allclose(agent.target_actor.params["out.bias"], 0.005, rtol=1e-12)

    def test_lag_shrinks(self, small_agent_config):
        agent = make_agent(small_agent_config)
        for value in agent.critic.params.values():
            value += 0.5

        def lag() -> float:
            return sum(
                float(np.sum(np.abs(agent.critic.params[n] - agent.target_critic.params[n]))) for n in agent.critic.params
            )

        previous = lag()
        for _ in range(5):
            agent.soft_update()
            current = lag()
            assert current < previous
            previous = current

    def test_blends_running_statistics(self, small_agent_config):
        agent = make_agent(small_agent_config)
        agent.actor.buffers["bn1.running_mean"][...] = 2.0
        agent.soft_update(0.5)
        np.testing.assert_allclose(agent.target_actor.buffers["bn1.running_mean"], 1.0)

    @pytest.mark.parametrize("tau", [0.0, 1.5])
    def test_invalid_rate(self, small_agent_config, tau):
        with pytest.raises(InvalidArgumentError):
            make_agent(small_agent_config).soft_update(tau)


class TestLearn:
    def test_warm_up_skips_updates(self, small_agent_config):
        agent = make_agent(small_agent_config)
        buffer = ReplayBuffer(64, STATE_DIM, ACTION_DIM)
        for tag in range(small_agent_config.batch_size - 1):
            buffer.store(experience(float(tag)))
        before = agent.actor.copy()
        assert agent.learn(buffer) is None
        np.testing.assert_array_equal(agent.actor.params["fc1.weight"], before.params["fc1.weight"])

    def test_updates_once_warm(self, small_agent_config):
        agent = make_agent(small_agent_config)
        buffer = ReplayBuffer(64, STATE_DIM, ACTION_DIM)
        for tag in range(small_agent_config.batch_size):
            buffer.store(experience(float(tag)))
        before = agent.target_critic.copy()
        losses = agent.learn(buffer)
        assert losses is not None
        assert not np.array_equal(agent.target_critic.params["out.bias"], before.params["out.bias"])

    def test_warm_up_steps_extend_the_wait(self, small_agent_config):
        agent = make_agent(replace(small_agent_config, warmup_steps=10))
        assert agent.warmup_size == 10
        buffer = ReplayBuffer(64, STATE_DIM, ACTION_DIM)
        for tag in range(9):
            buffer.store(experience(float(tag)))
        assert agent.learn(buffer) is None
        buffer.store(experience(9.0))
        assert agent.learn(buffer) is not None

    def test_random_actions_cover_the_box(self, small_agent_config):
        agent = make_agent(small_agent_config)
        draws = np.array([agent.random_action() for _ in range(2000)])
        assert draws.shape == (2000, ACTION_DIM)
        assert np.all(np.abs(draws) <= ACTION_BOUND)
        assert draws.min() < -0.95 and draws.max() > 0.95
        np.testing.assert_allclose(draws.mean(axis=0), 0.0, atol=0.05)

    def test_state_dict_round_trip(self, small_agent_config, rng):
        agent = make_agent(small_agent_config)
        agent.update_critic(random_batch(rng))
        clone = make_agent(small_agent_config, seed=99)
        clone.load_state_dict(agent.state_dict())
        state = np.array([0.3, 0.1, -0.4])
        np.testing.assert_array_equal(clone.select_action(state), agent.select_action(state))
        assert clone.critic_optimizer.state.t == 1

    def test_state_dict_dimension_check(self, small_agent_config):
        agent = make_agent(small_agent_config)
        other = DdpgAgent(4, ACTION_DIM, small_agent_config, np.random.default_rng(0), np.random.default_rng(1))
        with pytest.raises(InvalidArgumentError):
            other.load_state_dict(agent.state_dict())
