"""Actor and critic learners behind one interface.

Quantum learners evaluate variational circuits and get their gradients from
the parameter-shift rule; classical learners are small perceptrons
differentiated by autograd. Both hand flat numpy gradients to a torch Adam
optimizer, so the training loop never needs to know which kind it drives.
"""

from __future__ import annotations

import logging
from typing import Any, Literal, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field, model_validator

from aerie import classical, vqc
from aerie.environment import NUM_ACTIONS, ScenarioConfig
from aerie.errors import CheckpointError, TrainingDivergedError, UsageError
from aerie.vqc import CircuitModel

logger = logging.getLogger(__name__)

QUANTUM = "quantum"
CLASSICAL = "classical"


class ModelConfig(BaseModel):
    """Network sizes and readout scaling for actors and the centralized critic."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["quantum", "classical"] = Field(default=QUANTUM, description="Learner family")
    actor_qubits: int = Field(default=5, ge=1, le=16, description="Actor register size")
    critic_qubits: int = Field(default=8, ge=1, le=16, description="Critic register size")
    actor_blocks: Optional[int] = Field(default=None, ge=0, description="Actor re-uploading depth (auto if unset)")
    critic_blocks: Optional[int] = Field(default=None, ge=0, description="Critic re-uploading depth (auto if unset)")
    beta_a: float = Field(default=3.0, description="Actor readout scale")
    beta_c: float = Field(default=15.0, description="Critic readout scale")
    hidden_width: int = Field(default=classical.DEFAULT_HIDDEN_WIDTH, ge=1, description="Perceptron hidden width")
    actor_sees_state: bool = Field(default=True, description="Feed the reported service state to actors")

    @model_validator(mode="after")
    def _enough_readout_wires(self) -> "ModelConfig":
        if self.actor_qubits < NUM_ACTIONS:
            raise ValueError(f"actor_qubits must be at least {NUM_ACTIONS}, one readout wire per action")
        return self

    def actor_input_dim(self, scenario: ScenarioConfig) -> int:
        return scenario.observation_dim + (scenario.state_dim if self.actor_sees_state else 0)

    def critic_input_dim(self, scenario: ScenarioConfig) -> int:
        return scenario.state_dim


class Learner:
    """A parameter set with its Adam optimizer."""

    kind = "learner"

    def __init__(self, params: Sequence[nn.Parameter], lr: float, betas=(0.9, 0.999), eps: float = 1e-8, maximize: bool = False):
        self._params = list(params)
        self.optimizer = torch.optim.Adam(self._params, lr=lr, betas=tuple(betas), eps=eps, maximize=maximize)

    @property
    def num_params(self) -> int:
        return sum(p.numel() for p in self._params)

    def apply(self, grad: np.ndarray) -> None:
        """One optimizer step along ``grad`` (ascent for actors, descent for critics)."""
        grad = np.asarray(grad, dtype=float).reshape(-1)
        if grad.size != self.num_params:
            raise UsageError(f"gradient has {grad.size} entries, learner has {self.num_params}")
        if not np.all(np.isfinite(grad)):
            raise TrainingDivergedError("non-finite gradient", learner=self.kind)
        offset = 0
        for p in self._params:
            size = p.numel()
            p.grad = torch.from_numpy(grad[offset : offset + size].copy()).reshape(p.shape)
            offset += size
        self.optimizer.step()
        self.optimizer.zero_grad(set_to_none=True)
        self._sync()

    def _sync(self) -> None:
        pass

    def optimizer_document(self) -> dict[str, Any]:
        state = self.optimizer.state_dict()
        return {
            "state": {
                str(index): {key: _plain(value) for key, value in entry.items()}
                for index, entry in state["state"].items()
            },
            "param_groups": [{key: _plain(value) for key, value in group.items()} for group in state["param_groups"]],
        }

    def load_optimizer_document(self, doc: dict[str, Any]) -> None:
        try:
            state = {
                int(index): {
                    key: torch.tensor(value, dtype=torch.float32 if key == "step" else torch.float64)
                    for key, value in entry.items()
                }
                for index, entry in doc["state"].items()
            }
            self.optimizer.load_state_dict({"state": state, "param_groups": doc["param_groups"]})
        except (KeyError, TypeError, ValueError, RuntimeError) as exc:
            raise CheckpointError(f"malformed optimizer state: {exc}") from exc


def _plain(value):
    if torch.is_tensor(value):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    return value


# -- quantum --------------------------------------------------------------------


class QuantumActor(Learner):
    kind = "quantum-actor"

    def __init__(self, model: CircuitModel, beta_a: float, lr: float, **adam):
        if model.num_outputs < 2:
            raise UsageError(f"an actor circuit needs at least two readout wires, reads {model.num_outputs}")
        self.model = model
        self.beta_a = beta_a
        self.weights = nn.Parameter(torch.from_numpy(model.params.copy()))
        super().__init__([self.weights], lr, maximize=True, **adam)

    def _sync(self) -> None:
        self.model = self.model.with_params(self.weights.detach().numpy().copy())

    def probs(self, inputs) -> np.ndarray:
        return vqc.softmax(self.beta_a * vqc.readouts(self.model, inputs))

    def log_prob_gradient(self, inputs, actions, weights) -> np.ndarray:
        """sum_b w_b * grad log pi(a_b | x_b), through the softmax and the shift-rule Jacobian."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        probs = self.probs(inputs)
        jac = vqc.parameter_shift_jacobian(self.model, inputs)
        dlog = -self.beta_a * probs
        dlog[np.arange(len(actions)), actions] += self.beta_a
        return np.einsum("b,bj,bjp->p", weights, dlog, jac)

    def to_document(self) -> dict[str, Any]:
        return vqc.to_document(self.model)


class QuantumCritic(Learner):
    kind = "quantum-critic"

    def __init__(self, model: CircuitModel, beta_c: float, lr: float, **adam):
        if model.num_outputs != 1:
            raise UsageError(f"critic circuit must read one wire, reads {model.num_outputs}")
        self.model = model
        self.beta_c = beta_c
        self.weights = nn.Parameter(torch.from_numpy(model.params.copy()))
        super().__init__([self.weights], lr, maximize=False, **adam)

    def _sync(self) -> None:
        self.model = self.model.with_params(self.weights.detach().numpy().copy())

    def values(self, inputs) -> np.ndarray:
        return self.beta_c * vqc.readouts(self.model, inputs)[:, 0]

    def squared_error_gradient(self, inputs, targets) -> tuple[float, np.ndarray]:
        """sum_b (y_b - V(s_b))^2 and its parameter gradient, targets held fixed."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        residual = np.asarray(targets, dtype=float).reshape(-1) - self.values(inputs)
        jac = self.beta_c * vqc.parameter_shift_jacobian(self.model, inputs)[:, 0, :]
        return float(np.sum(residual**2)), -2.0 * residual @ jac

    def to_document(self) -> dict[str, Any]:
        return vqc.to_document(self.model)


# -- classical ------------------------------------------------------------------


class ClassicalActor(Learner):
    kind = "classical-actor"

    def __init__(self, net: classical.PerceptronNet, lr: float, **adam):
        self.net = net
        super().__init__(list(net.parameters()), lr, maximize=True, **adam)

    def probs(self, inputs) -> np.ndarray:
        return classical.policy_probs(self.net, inputs)

    def log_prob_gradient(self, inputs, actions, weights) -> np.ndarray:
        return classical.log_prob_gradient(self.net, inputs, actions, weights)

    def to_document(self) -> dict[str, Any]:
        return classical.to_document(self.net)


class ClassicalCritic(Learner):
    kind = "classical-critic"

    def __init__(self, net: classical.PerceptronNet, lr: float, **adam):
        self.net = net
        super().__init__(list(net.parameters()), lr, maximize=False, **adam)

    def values(self, inputs) -> np.ndarray:
        return classical.values(self.net, inputs)

    def squared_error_gradient(self, inputs, targets) -> tuple[float, np.ndarray]:
        return classical.squared_error_gradient(self.net, inputs, targets)

    def to_document(self) -> dict[str, Any]:
        return classical.to_document(self.net)


Actor = QuantumActor | ClassicalActor
Critic = QuantumCritic | ClassicalCritic


def build_actor(
    model_cfg: ModelConfig, scenario: ScenarioConfig, rng: np.random.Generator, lr: float, **adam
) -> Actor:
    input_dim = model_cfg.actor_input_dim(scenario)
    if model_cfg.kind == CLASSICAL:
        net = classical.PerceptronNet(input_dim, NUM_ACTIONS, model_cfg.hidden_width, vqc.ACTOR)
        net.reset_parameters(rng)
        return ClassicalActor(net, lr, **adam)
    circuit = CircuitModel.create(
        model_cfg.actor_qubits,
        input_dim,
        observable_wires=range(NUM_ACTIONS),
        num_blocks=model_cfg.actor_blocks,
        role=vqc.ACTOR,
        rng=rng,
    )
    return QuantumActor(circuit, model_cfg.beta_a, lr, **adam)


def build_critic(
    model_cfg: ModelConfig, scenario: ScenarioConfig, rng: np.random.Generator, lr: float, **adam
) -> Critic:
    input_dim = model_cfg.critic_input_dim(scenario)
    if model_cfg.kind == CLASSICAL:
        net = classical.PerceptronNet(input_dim, 1, model_cfg.hidden_width, vqc.CRITIC)
        net.reset_parameters(rng)
        return ClassicalCritic(net, lr, **adam)
    circuit = CircuitModel.create(
        model_cfg.critic_qubits,
        input_dim,
        observable_wires=(0,),
        num_blocks=model_cfg.critic_blocks,
        role=vqc.CRITIC,
        rng=rng,
    )
    return QuantumCritic(circuit, model_cfg.beta_c, lr, **adam)


def restore_actor(doc: dict[str, Any], model_cfg: ModelConfig, lr: float, **adam) -> Actor:
    if model_cfg.kind == CLASSICAL:
        return ClassicalActor(classical.from_document(doc), lr, **adam)
    return QuantumActor(vqc.from_document(doc), model_cfg.beta_a, lr, **adam)


def restore_critic(doc: dict[str, Any], model_cfg: ModelConfig, lr: float, **adam) -> Critic:
    if model_cfg.kind == CLASSICAL:
        return ClassicalCritic(classical.from_document(doc), lr, **adam)
    return QuantumCritic(vqc.from_document(doc), model_cfg.beta_c, lr, **adam)


def parameter_counts(model_cfg: ModelConfig, scenario: ScenarioConfig) -> dict[str, int]:
    """Per-network parameter counts without building any network."""
    actor_in = model_cfg.actor_input_dim(scenario)
    critic_in = model_cfg.critic_input_dim(scenario)
    if model_cfg.kind == CLASSICAL:
        actor = classical.perceptron_param_count(actor_in, NUM_ACTIONS, model_cfg.hidden_width)
        critic = classical.perceptron_param_count(critic_in, 1, model_cfg.hidden_width)
    else:
        actor_blocks = model_cfg.actor_blocks
        critic_blocks = model_cfg.critic_blocks
        if actor_blocks is None:
            actor_blocks = vqc.default_blocks(actor_in, model_cfg.actor_qubits)
        if critic_blocks is None:
            critic_blocks = vqc.default_blocks(critic_in, model_cfg.critic_qubits)
        actor = actor_blocks * model_cfg.actor_qubits * vqc.ANGLES_PER_QUBIT
        critic = critic_blocks * model_cfg.critic_qubits * vqc.ANGLES_PER_QUBIT
    return {"actor": actor, "critic": critic, "total": scenario.num_uavs * actor + critic}
