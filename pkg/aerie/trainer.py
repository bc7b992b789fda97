"""Centralized-critic actor-critic training, inference and baselines.

Every epoch runs one episode with epsilon-greedy joint actions and stores
the transitions. Once the replay buffer passes its minimum fill, each agent
in turn samples a minibatch, takes one critic descent step on the squared TD
error and one ascent step on its own policy objective, both driven by the
same TD errors.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from aerie import agents as ag
from aerie.environment import NUM_ACTIONS, UavEnvironment, WorldState, scale_observation
from aerie.errors import CheckpointError, TrainingDivergedError, UsageError
from aerie.metrics import EpochMetrics, atomic_write_text, distribution, summarize
from aerie.replay import Batch, ReplayBuffer, Transition
from aerie.stochastics import NoiseConfig, RandomStreams, draw_noise

if TYPE_CHECKING:
    from aerie.config import ExperimentConfig

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainConfig(BaseModel):
    """Optimisation and exploration settings."""

    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(default=0.98, ge=0, lt=1, description="Discount factor")
    lr_actor: float = Field(default=0.001, gt=0, description="Actor learning rate")
    lr_critic: float = Field(default=0.00025, gt=0, description="Critic learning rate")
    epsilon_init: float = Field(default=0.275, ge=0, le=1, description="Initial exploration rate")
    epsilon_anneal: float = Field(default=0.00005, ge=0, description="Exploration decrease per environment step")
    epsilon_min: float = Field(default=0.01, ge=0, le=1, description="Exploration floor")
    epochs: int = Field(default=10_000, ge=1, description="Training epochs (one episode each)")
    batch_size: int = Field(default=32, ge=1, description="Minibatch size")
    buffer_capacity: int = Field(default=50_000, ge=1, description="Replay buffer size")
    min_fill: int = Field(default=1_000, ge=1, description="Transitions stored before the first update")
    reward_weight: float = Field(default=0.01, ge=0, description="Reward coefficient w_c")
    adam_betas: tuple[float, float] = Field(default=(0.9, 0.999), description="Adam moment decay rates")
    adam_eps: float = Field(default=1e-8, gt=0, description="Adam denominator epsilon")
    critic_ideal_state: bool = Field(default=False, description="Train the critic on noise-free states")
    log_every: int = Field(default=100, ge=1, description="Epochs between progress log lines")
    checkpoint_every: int = Field(default=1_000, ge=1, description="Epochs between checkpoints")
    inference_episodes: int = Field(default=100, ge=1, description="Episodes per inference run")

    @model_validator(mode="after")
    def _check_schedule(self) -> "TrainConfig":
        if self.epsilon_min > self.epsilon_init:
            raise ValueError("epsilon_min must not exceed epsilon_init")
        if not all(0 <= b < 1 for b in self.adam_betas):
            raise ValueError("adam_betas must lie in [0, 1)")
        return self

    def adam(self) -> dict[str, Any]:
        return {"betas": self.adam_betas, "eps": self.adam_eps}


def epsilon_at(global_step: int, cfg: TrainConfig) -> float:
    """Linear per-step annealing down to the floor."""
    if global_step < 0:
        raise UsageError(f"step must be non-negative, got {global_step}")
    return max(cfg.epsilon_min, cfg.epsilon_init - global_step * cfg.epsilon_anneal)


def td_error(r, v_s, v_s_next, gamma: float):
    """delta = r + gamma * V(s') - V(s)."""
    return np.asarray(r, dtype=float) + gamma * np.asarray(v_s_next, dtype=float) - np.asarray(v_s, dtype=float)


def actor_input(observation: np.ndarray, state: Optional[np.ndarray], sees_state: bool = True) -> np.ndarray:
    """Scaled observation, followed by the reported service state when actors see it."""
    if not sees_state:
        return np.asarray(observation, dtype=float)
    return np.concatenate([np.asarray(observation, dtype=float), np.asarray(state, dtype=float)], axis=-1)


def select_action(actor, state, observation, epsilon: float, rng: np.random.Generator, sees_state: bool = True) -> int:
    """Uniform random action with probability epsilon, else the most probable one."""
    if not 0.0 <= epsilon <= 1.0:
        raise UsageError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(NUM_ACTIONS))
    probs = actor.probs(actor_input(observation, state, sees_state)[None, :])[0]
    return int(np.argmax(probs))


@dataclass(frozen=True)
class CriticUpdate:
    loss: float
    delta: np.ndarray


def update_critic(critic, batch: Batch, gamma: float, ideal_state: bool = False) -> CriticUpdate:
    """One descent step on sum_b (y_b - V(s_b))^2 with y_b = r_b + gamma (1 - done_b) V(s'_b).

    Targets are evaluated once before the step; the returned TD errors are
    the ones the actors must use.
    """
    states = batch.ideal_state if ideal_state else batch.state
    next_states = batch.next_ideal_state if ideal_state else batch.next_state
    v_s = critic.values(states)
    v_next = critic.values(next_states)
    discount = gamma * (1.0 - batch.done.astype(float))
    delta = td_error(batch.reward, v_s, v_next, discount)
    targets = v_s + delta
    loss, grad = critic.squared_error_gradient(states, targets)
    if not np.isfinite(loss):
        raise TrainingDivergedError("critic loss is not finite", loss=loss)
    critic.apply(grad)
    return CriticUpdate(loss, delta)


def update_actor(actor, agent: int, batch: Batch, delta: np.ndarray, sees_state: bool = True) -> None:
    """Ascend sum_b delta_b * grad log pi(a_b | s_b, o_b) for one agent."""
    inputs = actor_input(batch.observations[:, agent, :], batch.state, sees_state)
    grad = actor.log_prob_gradient(inputs, batch.actions[:, agent], delta)
    actor.apply(grad)


def update_actors(actors: Sequence, batch: Batch, delta: np.ndarray, sees_state: bool = True) -> None:
    """One ascent step per agent on a shared minibatch, delta held fixed."""
    for agent, actor in enumerate(actors):
        update_actor(actor, agent, batch, delta, sees_state)


# -- episode runner --------------------------------------------------------------------


@dataclass
class EpisodeRecord:
    """Per-step accumulation for one episode."""

    reward: float = 0.0
    support: list[float] = field(default_factory=list)
    qos: list[float] = field(default_factory=list)
    trace: Optional[list[dict[str, float]]] = None

    def add(self, step: int, world: WorldState, r: float) -> None:
        self.reward += r
        self.support.append(world.service.support_rate)
        self.qos.append(world.service.qos_total)
        if self.trace is not None:
            row: dict[str, float] = {"step": step}
            for m in range(world.num_uavs):
                row[f"uav{m}_x"] = float(world.positions[m, 0])
                row[f"uav{m}_y"] = float(world.positions[m, 1])
                row[f"uav{m}_energy"] = float(world.energy[m])
            row.update(support_rate=self.support[-1], qos_sum=self.qos[-1], reward=r)
            self.trace.append(row)


class Trainer:
    """Owns the environment, learners, replay buffer and random streams of one run."""

    def __init__(self, config: "ExperimentConfig", actors: Optional[list] = None, critic=None):
        self.config = config
        sc, tr = config.scenario, config.train
        self.env = UavEnvironment(sc, config.channel, config.noise, tr.reward_weight)
        self.streams = RandomStreams(config.seed, sc.num_uavs)
        init_rng = np.random.default_rng(np.random.SeedSequence([config.seed, sc.num_uavs + 2]))
        self.critic = critic or ag.build_critic(config.model, sc, init_rng, tr.lr_critic, **tr.adam())
        self.actors = actors or [
            ag.build_actor(config.model, sc, init_rng, tr.lr_actor, **tr.adam()) for _ in range(sc.num_uavs)
        ]
        self.buffer = ReplayBuffer(tr.buffer_capacity, sc.state_dim, sc.num_uavs, sc.observation_dim, tr.min_fill)
        self.global_step = 0
        self.epochs_done = 0

    @property
    def sees_state(self) -> bool:
        return self.config.model.actor_sees_state

    def _draws(self, noise: NoiseConfig):
        return [draw_noise(self.streams.agent(m), noise) for m in range(self.config.scenario.num_uavs)]

    def _scaled(self, world: WorldState) -> np.ndarray:
        return np.stack([scale_observation(o, self.config.scenario) for o in self.env.observations(world)])

    def run_episode(
        self,
        index: int,
        explore: bool = True,
        store: bool = True,
        random_policy: bool = False,
        trace: Optional[list[dict[str, float]]] = None,
    ) -> EpochMetrics:
        """Play one episode; returns its metrics record."""
        started = time.perf_counter()
        sc = self.config.scenario
        noise = self.env.noise
        world = self.env.reset(self.streams.environment, self._draws(noise))
        obs = self._scaled(world)
        state, ideal = world.reported_service.vector(), world.service.vector()
        epsilon = epsilon_at(self.global_step, self.config.train) if explore else 0.0
        record = EpisodeRecord(trace=trace)

        for step in range(1, sc.episode_steps + 1):
            if random_policy:
                actions = [int(self.streams.agent(m).integers(NUM_ACTIONS)) for m in range(sc.num_uavs)]
            else:
                eps = epsilon_at(self.global_step, self.config.train) if explore else 0.0
                actions = [
                    select_action(self.actors[m], state, obs[m], eps, self.streams.agent(m), self.sees_state)
                    for m in range(sc.num_uavs)
                ]
            result = self.env.step(world, actions, self._draws(noise))
            if not np.isfinite(result.reward):
                raise TrainingDivergedError("reward is not finite", step=step, episode=index)
            next_obs = self._scaled(result.world)
            if store:
                self.buffer.push(
                    Transition(
                        state=state,
                        ideal_state=ideal,
                        observations=obs,
                        actions=np.asarray(actions),
                        reward=result.reward,
                        next_state=result.observed_state,
                        next_ideal_state=result.state,
                        next_observations=next_obs,
                        done=result.done,
                    )
                )
            if explore:
                self.global_step += 1
            record.add(step, result.world, result.reward)
            world, obs, state, ideal = result.world, next_obs, result.observed_state, result.state

        return EpochMetrics(
            epoch=index,
            reward=record.reward,
            support_rate=float(np.mean(record.support)),
            qos_total=float(np.mean(record.qos)),
            energy_remaining_mean=float(np.mean(world.energy)),
            epsilon=epsilon,
            wall_ms=(time.perf_counter() - started) * 1e3,
        )

    def learn(self) -> Optional[float]:
        """Critic then actor update for each agent in turn; mean critic loss."""
        if not self.buffer.ready:
            return None
        tr = self.config.train
        losses = []
        for m, actor in enumerate(self.actors):
            batch = self.buffer.sample(tr.batch_size, self.streams.trainer)
            update = update_critic(self.critic, batch, tr.gamma, tr.critic_ideal_state)
            update_actor(actor, m, batch, update.delta, self.sees_state)
            losses.append(update.loss)
        loss = float(np.mean(losses))
        logger.debug("epoch %d critic loss %.6g", self.epochs_done, loss)
        return loss

    def train(
        self,
        epochs: Optional[int] = None,
        on_epoch: Optional[Callable[[EpochMetrics], None]] = None,
        checkpoint_path: Optional[Path] = None,
    ) -> list[EpochMetrics]:
        tr = self.config.train
        epochs = tr.epochs if epochs is None else epochs
        history = []
        for _ in range(epochs):
            index = self.epochs_done + 1
            record = self.run_episode(index)
            self.learn()
            self.epochs_done = index
            if not record.is_finite():
                raise TrainingDivergedError("non-finite epoch metrics", epoch=index)
            history.append(record)
            if index % tr.log_every == 0:
                logger.info(
                    "epoch %d reward %.4f support %.3f epsilon %.4f",
                    index,
                    record.reward,
                    record.support_rate,
                    record.epsilon,
                )
            if checkpoint_path is not None and index % tr.checkpoint_every == 0:
                self.save_checkpoint(checkpoint_path)
            if on_epoch is not None:
                on_epoch(record)
        if checkpoint_path is not None:
            self.save_checkpoint(checkpoint_path)
        return history

    def infer(
        self,
        episodes: Optional[int] = None,
        trace: Optional[list[dict[str, float]]] = None,
        on_episode: Optional[Callable[[EpochMetrics], None]] = None,
    ) -> list[EpochMetrics]:
        """Greedy episodes without learning; the trace (if any) covers the first episode."""
        episodes = self.config.train.inference_episodes if episodes is None else episodes
        results = []
        for index in range(1, episodes + 1):
            record = self.run_episode(index, explore=False, store=False, trace=trace if index == 1 else None)
            results.append(record)
            if on_episode is not None:
                on_episode(record)
        return results

    # -- checkpoints ----------------------------------------------------------------

    def checkpoint_document(self) -> dict[str, Any]:
        return {
            "version": CHECKPOINT_VERSION,
            "kind": self.config.model.kind,
            "config_hash": self.config.fingerprint(),
            "epochs_done": self.epochs_done,
            "global_step": self.global_step,
            "critic": self.critic.to_document(),
            "actors": [actor.to_document() for actor in self.actors],
            "optimizers": {
                "critic": self.critic.optimizer_document(),
                "actors": [actor.optimizer_document() for actor in self.actors],
            },
        }

    def save_checkpoint(self, path: Path) -> Path:
        atomic_write_text(Path(path), json.dumps(self.checkpoint_document()) + "\n")
        logger.debug("checkpoint written to %s", path)
        return Path(path)

    @classmethod
    def from_checkpoint(cls, config: "ExperimentConfig", path: Path) -> "Trainer":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.from_document(config, doc)

    @classmethod
    def from_document(cls, config: "ExperimentConfig", doc: dict[str, Any]) -> "Trainer":
        if doc.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
        sc, mc, tr = config.scenario, config.model, config.train
        if doc.get("kind") != mc.kind:
            raise CheckpointError(f"checkpoint holds {doc.get('kind')!r} networks, config asks for {mc.kind!r}")
        actor_docs = doc.get("actors", [])
        if len(actor_docs) != sc.num_uavs:
            raise CheckpointError(f"checkpoint has {len(actor_docs)} actors, scenario has {sc.num_uavs} UAVs")
        if any(a.get("input_dim") != mc.actor_input_dim(sc) for a in actor_docs):
            raise CheckpointError("actor input width does not match the scenario")
        if doc.get("critic", {}).get("input_dim") != mc.critic_input_dim(sc):
            raise CheckpointError("critic input width does not match the scenario")
        if doc.get("config_hash") != config.fingerprint():
            logger.info("checkpoint was trained under a different configuration")

        critic = ag.restore_critic(doc["critic"], mc, tr.lr_critic, **tr.adam())
        actors = [ag.restore_actor(a, mc, tr.lr_actor, **tr.adam()) for a in actor_docs]
        optimizers = doc.get("optimizers")
        if optimizers:
            critic.load_optimizer_document(optimizers["critic"])
            for actor, state in zip(actors, optimizers["actors"]):
                actor.load_optimizer_document(state)
        trainer = cls(config, actors=actors, critic=critic)
        trainer.epochs_done = int(doc.get("epochs_done", 0))
        trainer.global_step = int(doc.get("global_step", 0))
        return trainer


# -- entry points ----------------------------------------------------------------------


@dataclass
class TrainResult:
    metrics: list[EpochMetrics]
    trainer: Trainer


def train(
    config: "ExperimentConfig",
    checkpoint_path: Optional[Path] = None,
    on_epoch: Optional[Callable[[EpochMetrics], None]] = None,
) -> TrainResult:
    trainer = Trainer(config)
    logger.info(
        "training %s networks: %d UAVs, %d users, %d epochs",
        config.model.kind,
        config.scenario.num_uavs,
        config.scenario.num_users,
        config.train.epochs,
    )
    metrics = trainer.train(on_epoch=on_epoch, checkpoint_path=checkpoint_path)
    return TrainResult(metrics, trainer)


def infer(
    config: "ExperimentConfig",
    checkpoint: Path | Trainer,
    episodes: Optional[int] = None,
    trace: Optional[list[dict[str, float]]] = None,
    on_episode: Optional[Callable[[EpochMetrics], None]] = None,
) -> list[EpochMetrics]:
    """Greedy rollouts of a trained policy in a fresh environment seeded by ``config.seed``."""
    if isinstance(checkpoint, Trainer):
        trainer = Trainer(config, actors=checkpoint.actors, critic=checkpoint.critic)
    else:
        trainer = Trainer.from_checkpoint(config, checkpoint)
    return trainer.infer(episodes, trace, on_episode)


def baseline_random_walk(
    config: "ExperimentConfig",
    episodes: Optional[int] = None,
    on_episode: Optional[Callable[[EpochMetrics], None]] = None,
) -> list[EpochMetrics]:
    """UAVs pick uniformly random actions regardless of what they observe."""
    trainer = Trainer(config)
    episodes = config.train.inference_episodes if episodes is None else episodes
    results = []
    for index in range(1, episodes + 1):
        record = trainer.run_episode(index, explore=False, store=False, random_policy=True)
        results.append(record)
        if on_episode is not None:
            on_episode(record)
    return results


def classical_config(config: "ExperimentConfig") -> "ExperimentConfig":
    return config.model_copy(update={"model": config.model.model_copy(update={"kind": ag.CLASSICAL})})


def baseline_classical(
    config: "ExperimentConfig",
    checkpoint_path: Optional[Path] = None,
    on_epoch: Optional[Callable[[EpochMetrics], None]] = None,
) -> TrainResult:
    """Same training loop with perceptron actors and critic."""
    return train(classical_config(config), checkpoint_path, on_epoch)


# -- noise robustness ----------------------------------------------------------------------


@dataclass(frozen=True)
class RobustnessRow:
    seed: int
    trained_with: str
    support_rate: float
    qos_total: float
    reward: float


@dataclass(frozen=True)
class RobustnessReport:
    rows: list[RobustnessRow]

    @property
    def arms(self) -> list[str]:
        return list(dict.fromkeys(r.trained_with for r in self.rows))

    def median(self, trained_with: str, metric: str = "support_rate") -> float:
        values = [getattr(r, metric) for r in self.rows if r.trained_with == trained_with]
        if not values:
            raise UsageError(f"no robustness runs trained with {trained_with!r}")
        return float(np.median(values))

    @property
    def noisy_policy_holds_up(self) -> bool:
        return self.median("dual-noise") >= self.median("noise-free")


# label -> (state noise, action noise) during training
NOISE_ARMS: dict[str, tuple[bool, bool]] = {
    "noise-free": (False, False),
    "state-noise": (True, False),
    "action-noise": (False, True),
    "dual-noise": (True, True),
}


def with_noise(config: "ExperimentConfig", state: bool, action: Optional[bool] = None) -> "ExperimentConfig":
    """Copy of ``config`` with GPS noise set to ``state`` and wind to ``action`` (default: same as state)."""
    action = state if action is None else action
    noise = config.noise.model_copy(update={"state_noise": state, "action_noise": action})
    return config.model_copy(update={"noise": noise})


def robustness(
    config: "ExperimentConfig",
    seeds: Sequence[int],
    episodes: Optional[int] = None,
    on_run: Optional[Callable[[str], None]] = None,
    arms: Sequence[str] = tuple(NOISE_ARMS),
) -> RobustnessReport:
    """Train one policy per seed and noise arm, then evaluate every policy under dual noise."""
    unknown = [arm for arm in arms if arm not in NOISE_ARMS]
    if unknown or not {"noise-free", "dual-noise"} <= set(arms):
        raise UsageError(
            f"robustness arms must come from {list(NOISE_ARMS)} and include noise-free and dual-noise, got {list(arms)}"
        )
    rows = []
    for seed in seeds:
        for label in arms:
            run_cfg = with_noise(config, *NOISE_ARMS[label]).model_copy(update={"seed": seed})
            result = train(run_cfg)
            evaluation = infer(with_noise(run_cfg, True), result.trainer, episodes)
            rows.append(
                RobustnessRow(
                    seed=seed,
                    trained_with=label,
                    support_rate=distribution(evaluation, "support_rate")["median"],
                    qos_total=distribution(evaluation, "qos_total")["median"],
                    reward=distribution(evaluation, "reward")["median"],
                )
            )
            if on_run is not None:
                on_run(f"seed {seed} {label}")
    return RobustnessReport(rows)


# -- learning benefit ------------------------------------------------------------------------

BENEFIT_THRESHOLD = 1.5


@dataclass(frozen=True)
class BenefitReport:
    """Trailing-window training reward against random-walk reward, per seed."""

    seeds: list[int]
    trained_reward: list[float]
    random_reward: list[float]
    threshold: float = BENEFIT_THRESHOLD

    @property
    def ratio(self) -> float:
        trained = float(np.mean(self.trained_reward))
        random = float(np.mean(self.random_reward))
        if random <= 0.0:
            return math.inf if trained > 0.0 else 0.0
        return trained / random

    @property
    def passes(self) -> bool:
        return self.ratio >= self.threshold


def learning_benefit(
    config: "ExperimentConfig",
    seeds: Sequence[int],
    episodes: Optional[int] = None,
    on_run: Optional[Callable[[str], None]] = None,
) -> BenefitReport:
    """Train on each seed and roll out the random walk on the same seed."""
    if not seeds:
        raise UsageError("learning benefit needs at least one seed")
    trained, random = [], []
    for seed in seeds:
        run_cfg = config.model_copy(update={"seed": seed})
        metrics = train(run_cfg).metrics
        if not all(m.is_finite() for m in metrics):
            raise TrainingDivergedError(f"non-finite training metrics on seed {seed}")
        trained.append(summarize(metrics)["reward"]["mean"])
        random.append(distribution(baseline_random_walk(run_cfg, episodes), "reward")["mean"])
        if on_run is not None:
            on_run(f"seed {seed}")
    return BenefitReport(list(seeds), trained, random)
