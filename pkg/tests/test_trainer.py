"""Test the actor-critic updates, the training loop, checkpoints and baselines."""

import dataclasses
import json
import math
from pathlib import Path

import numpy as np
import pytest

from aerie import agents as ag
from aerie import trainer as tr
from aerie.config import ConfigManager, ExperimentConfig
from aerie.environment import NUM_ACTIONS, ScenarioConfig
from aerie.errors import CheckpointError, UsageError
from aerie.replay import Batch
from aerie.trainer import TrainConfig, Trainer


@pytest.fixture
def tiny():
    return ExperimentConfig(
        seed=3,
        scenario=ScenarioConfig(map_size_m=2000.0, num_uavs=2, num_users=3, episode_steps=3),
        train=TrainConfig(
            epochs=4,
            batch_size=4,
            min_fill=3,
            buffer_capacity=50,
            log_every=1,
            checkpoint_every=2,
            inference_episodes=2,
        ),
    )


def _without_wall_time(metrics):
    return [(m.epoch, m.reward, m.support_rate, m.qos_total, m.energy_remaining_mean, m.epsilon) for m in metrics]


def test_epsilon_schedule():
    cfg = TrainConfig()
    assert tr.epsilon_at(0, cfg) == pytest.approx(0.275)
    assert tr.epsilon_at(1000, cfg) == pytest.approx(0.225)
    assert tr.epsilon_at(10**7, cfg) == 0.01
    with pytest.raises(UsageError):
        tr.epsilon_at(-1, cfg)


def test_epsilon_floor_cannot_exceed_start():
    with pytest.raises(ValueError):
        TrainConfig(epsilon_init=0.1, epsilon_min=0.2)


def test_td_error():
    assert tr.td_error(1.0, 2.0, 3.0, 0.5) == pytest.approx(0.5)
    np.testing.assert_allclose(tr.td_error([0.0, 1.0], [1.0, 1.0], [1.0, 0.0], 0.98), [-0.02, 0.0])


def test_actor_input():
    obs, state = np.ones(3), np.zeros(4)
    assert tr.actor_input(obs, state).shape == (7,)
    np.testing.assert_array_equal(tr.actor_input(obs, state, sees_state=False), obs)


class _FixedActor:
    def probs(self, inputs):
        return np.tile([0.1, 0.1, 0.6, 0.1, 0.1], (len(inputs), 1))


def test_select_action():
    rng = np.random.default_rng(0)
    assert tr.select_action(_FixedActor(), np.zeros(2), np.zeros(3), 0.0, rng) == 2
    picks = {tr.select_action(_FixedActor(), np.zeros(2), np.zeros(3), 1.0, rng) for _ in range(200)}
    assert picks == set(range(NUM_ACTIONS))
    with pytest.raises(UsageError):
        tr.select_action(_FixedActor(), np.zeros(2), np.zeros(3), 1.5, rng)


def _batch(rng, size, state_dim, done):
    state = rng.normal(size=(size, state_dim))
    obs = rng.normal(size=(size, 2, 5))
    return Batch(
        state=state,
        ideal_state=state,
        observations=obs,
        actions=rng.integers(NUM_ACTIONS, size=(size, 2)),
        reward=rng.random(size),
        next_state=rng.normal(size=(size, state_dim)),
        next_ideal_state=state,
        next_observations=obs,
        done=np.full(size, done),
    )


def test_update_critic_returns_pre_step_td_errors(tiny):
    rng = np.random.default_rng(1)
    critic = ag.build_critic(tiny.model, tiny.scenario, rng, lr=0.01)
    batch = _batch(rng, 5, tiny.scenario.state_dim, done=False)
    v_s, v_next = critic.values(batch.state), critic.values(batch.next_state)
    update = tr.update_critic(critic, batch, gamma=0.98)
    np.testing.assert_allclose(update.delta, batch.reward + 0.98 * v_next - v_s)
    assert update.loss == pytest.approx(np.sum(update.delta**2))
    assert not np.allclose(critic.values(batch.state), v_s)


def test_terminal_transitions_are_not_bootstrapped(tiny):
    rng = np.random.default_rng(2)
    critic = ag.build_critic(tiny.model, tiny.scenario, rng, lr=0.01)
    batch = _batch(rng, 4, tiny.scenario.state_dim, done=True)
    v_s = critic.values(batch.state)
    update = tr.update_critic(critic, batch, gamma=0.98)
    np.testing.assert_allclose(update.delta, batch.reward - v_s)


def test_update_actor_moves_only_that_agent(tiny):
    rng = np.random.default_rng(4)
    actors = [ag.build_actor(tiny.model, tiny.scenario, rng, lr=0.01) for _ in range(2)]
    batch = _batch(rng, 4, tiny.scenario.state_dim, done=False)
    before = [a.model.params.copy() for a in actors]
    tr.update_actor(actors[1], 1, batch, np.ones(4))
    np.testing.assert_array_equal(actors[0].model.params, before[0])
    assert not np.allclose(actors[1].model.params, before[1])


def test_zero_td_error_leaves_learners_unchanged(tiny):
    rng = np.random.default_rng(5)
    critic = ag.build_critic(tiny.model, tiny.scenario, rng, lr=0.01)
    actors = [ag.build_actor(tiny.model, tiny.scenario, rng, lr=0.01) for _ in range(2)]
    batch = _batch(rng, 4, tiny.scenario.state_dim, done=False)
    # Rewards chosen so the TD error vanishes.
    reward = critic.values(batch.state) - 0.98 * critic.values(batch.next_state)
    batch = dataclasses.replace(batch, reward=reward)
    before = critic.model.params.copy()
    update = tr.update_critic(critic, batch, gamma=0.98)
    np.testing.assert_allclose(update.delta, 0.0, atol=1e-10)
    np.testing.assert_allclose(critic.model.params, before, atol=1e-5)

    before = [a.model.params.copy() for a in actors]
    tr.update_actors(actors, batch, np.zeros(4))
    for actor, params in zip(actors, before):
        np.testing.assert_array_equal(actor.model.params, params)


def test_positive_td_error_raises_log_probability(tiny):
    rng = np.random.default_rng(6)
    actor = ag.build_actor(tiny.model, tiny.scenario, rng, lr=1e-5)
    batch = _batch(rng, 1, tiny.scenario.state_dim, done=False)
    inputs = tr.actor_input(batch.observations[:, 0, :], batch.state)
    taken = int(batch.actions[0, 0])
    before = actor.probs(inputs)[0, taken]
    tr.update_actors([actor], batch, np.array([1.0]))
    assert actor.probs(inputs)[0, taken] > before


def test_training_smoke(tiny, tmp_path):
    checkpoint = tmp_path / "checkpoint.json"
    seen = []
    result = tr.train(tiny, checkpoint_path=checkpoint, on_epoch=seen.append)
    metrics = result.metrics
    assert [m.epoch for m in metrics] == [1, 2, 3, 4]
    assert seen == metrics
    assert all(m.is_finite() for m in metrics)
    assert all(0.0 <= m.support_rate <= 1.0 for m in metrics)
    assert len(result.trainer.buffer) == 12
    assert result.trainer.global_step == 12
    assert metrics[0].epsilon == pytest.approx(0.275)
    assert metrics[1].epsilon < metrics[0].epsilon
    assert checkpoint.is_file()


def test_training_is_deterministic(tiny):
    first = tr.train(tiny).metrics
    second = tr.train(tiny).metrics
    assert _without_wall_time(first) == _without_wall_time(second)


def test_training_with_noise_and_ideal_critic(tiny):
    cfg = tr.with_noise(tiny, True)
    cfg = cfg.model_copy(update={"train": cfg.train.model_copy(update={"critic_ideal_state": True, "epochs": 2})})
    metrics = tr.train(cfg).metrics
    assert len(metrics) == 2
    assert all(m.is_finite() for m in metrics)


def test_checkpoint_round_trip(tiny, tmp_path):
    path = tmp_path / "ckpt.json"
    trained = tr.train(tiny, checkpoint_path=path).trainer
    restored = Trainer.from_checkpoint(tiny, path)
    assert restored.epochs_done == 4
    assert restored.global_step == trained.global_step
    x = np.linspace(-1.0, 1.0, tiny.model.actor_input_dim(tiny.scenario))[None, :]
    for a, b in zip(trained.actors, restored.actors):
        np.testing.assert_array_equal(a.probs(x), b.probs(x))
    s = np.zeros((1, tiny.scenario.state_dim))
    np.testing.assert_array_equal(trained.critic.values(s), restored.critic.values(s))


def test_checkpoint_mismatches(tiny, tmp_path):
    doc = tr.train(tiny).trainer.checkpoint_document()
    with pytest.raises(CheckpointError):
        Trainer.from_document(tr.classical_config(tiny), doc)
    with pytest.raises(CheckpointError):
        Trainer.from_document(tiny, {**doc, "actors": doc["actors"][:1]})
    with pytest.raises(CheckpointError):
        Trainer.from_document(tiny, {**doc, "version": 2})
    bigger = tiny.model_copy(update={"scenario": tiny.scenario.model_copy(update={"num_users": 4})})
    with pytest.raises(CheckpointError):
        Trainer.from_document(bigger, doc)
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(CheckpointError):
        Trainer.from_checkpoint(tiny, broken)
    with pytest.raises(CheckpointError):
        Trainer.from_checkpoint(tiny, tmp_path / "missing.json")


def test_checkpoint_is_plain_json(tiny):
    doc = tr.train(tiny).trainer.checkpoint_document()
    reloaded = json.loads(json.dumps(doc))
    assert reloaded["config_hash"] == tiny.fingerprint()
    assert len(reloaded["optimizers"]["actors"]) == 2


def test_inference_is_greedy_and_traced(tiny):
    trained = tr.train(tiny).trainer
    trace = []
    results = tr.infer(tiny, trained, trace=trace)
    assert len(results) == 2
    assert all(m.epsilon == 0.0 for m in results)
    assert len(trace) == tiny.scenario.episode_steps
    assert {"step", "uav0_x", "uav1_energy", "support_rate", "qos_sum", "reward"} <= set(trace[0])
    again = tr.infer(tiny, trained)
    assert _without_wall_time(results) == _without_wall_time(again)
    assert len(trained.buffer) == 12


def test_random_walk_baseline(tiny):
    results = tr.baseline_random_walk(tiny, episodes=3)
    assert len(results) == 3
    assert _without_wall_time(results) == _without_wall_time(tr.baseline_random_walk(tiny, episodes=3))


def test_random_walk_covers_users_on_default_map():
    cfg = ExperimentConfig(seed=0)
    results = tr.baseline_random_walk(cfg, episodes=5)
    assert np.mean([m.support_rate for m in results]) > 0.0


def test_classical_baseline(tiny):
    result = tr.baseline_classical(tiny)
    assert all(isinstance(a, ag.ClassicalActor) for a in result.trainer.actors)
    assert isinstance(result.trainer.critic, ag.ClassicalCritic)
    assert len(result.metrics) == 4


def test_robustness_report(tiny):
    report = tr.robustness(tiny.model_copy(update={"train": tiny.train.model_copy(update={"epochs": 2})}), [0], 2)
    arms = ["noise-free", "state-noise", "action-noise", "dual-noise"]
    assert [(r.seed, r.trained_with) for r in report.rows] == [(0, arm) for arm in arms]
    assert report.arms == arms
    for arm in arms:
        assert 0.0 <= report.median(arm) <= 1.0
    assert isinstance(report.noisy_policy_holds_up, bool)
    with pytest.raises(UsageError):
        report.median("gusty")


def test_single_noise_arms(tiny):
    state_only = tr.with_noise(tiny, *tr.NOISE_ARMS["state-noise"]).noise
    action_only = tr.with_noise(tiny, *tr.NOISE_ARMS["action-noise"]).noise
    assert (state_only.state_noise, state_only.action_noise) == (True, False)
    assert (action_only.state_noise, action_only.action_noise) == (False, True)
    both = tr.with_noise(tiny, True).noise
    assert (both.state_noise, both.action_noise) == (True, True)


def test_robustness_arms_validated(tiny):
    with pytest.raises(UsageError):
        tr.robustness(tiny, [0], 1, arms=["noise-free", "gusty", "dual-noise"])
    with pytest.raises(UsageError):
        tr.robustness(tiny, [0], 1, arms=["state-noise"])


def test_benefit_report_ratio():
    report = tr.BenefitReport([0, 1], [0.3, 0.5], [0.2, 0.2])
    assert report.ratio == pytest.approx(2.0)
    assert report.passes
    assert not tr.BenefitReport([0], [0.25], [0.2]).passes
    assert tr.BenefitReport([0], [0.1], [0.0]).ratio == math.inf
    assert tr.BenefitReport([0], [0.0], [0.0]).ratio == 0.0


def test_learning_benefit_runs_each_seed(tiny):
    seen = []
    report = tr.learning_benefit(tiny, [3, 4], episodes=2, on_run=seen.append)
    assert report.seeds == [3, 4]
    assert seen == ["seed 3", "seed 4"]
    assert all(np.isfinite(report.trained_reward)) and all(np.isfinite(report.random_reward))
    assert report.random_reward[0] == pytest.approx(
        np.mean([m.reward for m in tr.baseline_random_walk(tiny.model_copy(update={"seed": 3}), 2)])
    )
    with pytest.raises(UsageError):
        tr.learning_benefit(tiny, [])


@pytest.mark.slow
def test_trained_policy_beats_random_walk_on_smoke_scenario():
    smoke = Path(__file__).resolve().parent.parent / "configs" / "smoke.toml"
    cfg = ConfigManager(smoke).load()
    report = tr.learning_benefit(cfg, [0, 1, 2])
    assert report.ratio >= tr.BENEFIT_THRESHOLD, (report.trained_reward, report.random_reward)
