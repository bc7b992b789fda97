"""Analytic gradients against central finite differences.

Shift-rule Jacobians of random circuits, the actor log-probability and
critic loss gradients of random quantum learners, and autograd gradients of
random perceptrons are each compared with a central difference of step
``h``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from aerie import classical, vqc
from aerie.agents import QuantumActor, QuantumCritic
from aerie.vqc import CircuitModel

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-5
MAX_QUBITS = 6
MAX_BLOCKS = 3
MAX_INPUT_DIM = 8


@dataclass(frozen=True)
class GradientCheck:
    label: str
    cases: int
    max_abs_error: float

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.max_abs_error <= tolerance


@dataclass
class GradcheckReport:
    checks: list[GradientCheck] = field(default_factory=list)
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def max_error(self) -> float:
        return max((c.max_abs_error for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return all(c.passed(self.tolerance) for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "max_error": self.max_error,
            "passed": self.passed,
            "checks": [{"label": c.label, "cases": c.cases, "max_abs_error": c.max_abs_error} for c in self.checks],
        }


def central_difference(fn: Callable[[np.ndarray], np.ndarray], params: np.ndarray, h: float = DEFAULT_STEP) -> np.ndarray:
    """d fn / d params by central differences; ``fn`` may return an array.

    The result has shape ``fn(params).shape + params.shape``.
    """
    params = np.asarray(params, dtype=float)
    base = np.asarray(fn(params), dtype=float)
    grad = np.zeros(base.shape + params.shape)
    for i in range(params.size):
        step = np.zeros_like(params)
        step.flat[i] = h
        grad[..., i] = (np.asarray(fn(params + step)) - np.asarray(fn(params - step))) / (2.0 * h)
    return grad


def random_circuit(rng: np.random.Generator, max_qubits: int = MAX_QUBITS, max_blocks: int = MAX_BLOCKS, all_wires: bool = False) -> CircuitModel:
    num_qubits = int(rng.integers(1, max_qubits + 1))
    num_blocks = int(rng.integers(1, max_blocks + 1))
    input_dim = int(rng.integers(0, MAX_INPUT_DIM + 1))
    if all_wires:
        wires = tuple(range(num_qubits))
    else:
        count = int(rng.integers(1, num_qubits + 1))
        wires = tuple(sorted(rng.choice(num_qubits, size=count, replace=False).tolist()))
    return CircuitModel.create(num_qubits, input_dim, wires, num_blocks=num_blocks, rng=rng)


def _random_inputs(rng: np.random.Generator, batch: int, width: int) -> np.ndarray:
    return rng.normal(0.0, 1.5, size=(batch, width))


def check_circuits(rng: np.random.Generator, count: int = 100, h: float = DEFAULT_STEP) -> GradientCheck:
    worst = 0.0
    for _ in range(count):
        model = random_circuit(rng)
        x = _random_inputs(rng, 1, model.input_dim)
        analytic = vqc.parameter_shift_jacobian(model, x)[0]
        numeric = central_difference(lambda p: vqc.readouts(model.with_params(p), x)[0], model.params, h)
        worst = max(worst, float(np.max(np.abs(analytic - numeric))))
    return GradientCheck("circuit readouts", count, worst)


def check_quantum_actors(rng: np.random.Generator, count: int = 10, h: float = DEFAULT_STEP, beta_a: float = 3.0) -> GradientCheck:
    worst = 0.0
    for _ in range(count):
        model = random_circuit(rng, max_qubits=max(2, MAX_QUBITS - 2), all_wires=True)
        if model.num_outputs < 2:
            model = CircuitModel.create(2, model.input_dim, (0, 1), num_blocks=model.num_blocks, rng=rng)
        actor = QuantumActor(model, beta_a, lr=1e-3)
        batch = 3
        x = _random_inputs(rng, batch, model.input_dim)
        actions = rng.integers(0, model.num_outputs, size=batch)
        weights = rng.normal(size=batch)

        def objective(p: np.ndarray) -> float:
            probs = vqc.softmax(beta_a * vqc.readouts(model.with_params(p), x))
            return float(np.sum(weights * np.log(probs[np.arange(batch), actions])))

        analytic = actor.log_prob_gradient(x, actions, weights)
        numeric = central_difference(objective, model.params, h)
        worst = max(worst, float(np.max(np.abs(analytic - numeric))))
    return GradientCheck("actor log-probability", count, worst)


def check_quantum_critics(rng: np.random.Generator, count: int = 10, h: float = DEFAULT_STEP, beta_c: float = 1.0) -> GradientCheck:
    worst = 0.0
    for _ in range(count):
        base = random_circuit(rng)
        model = base if base.observable_wires == (0,) else CircuitModel.create(
            base.num_qubits, base.input_dim, (0,), num_blocks=base.num_blocks, role=vqc.CRITIC, rng=rng
        )
        critic = QuantumCritic(model, beta_c, lr=1e-3)
        batch = 3
        x = _random_inputs(rng, batch, model.input_dim)
        targets = rng.normal(size=batch)

        def loss(p: np.ndarray) -> float:
            v = beta_c * vqc.readouts(model.with_params(p), x)[:, 0]
            return float(np.sum((targets - v) ** 2))

        _, analytic = critic.squared_error_gradient(x, targets)
        numeric = central_difference(loss, model.params, h)
        worst = max(worst, float(np.max(np.abs(analytic - numeric))))
    return GradientCheck("critic squared error", count, worst)


def check_perceptrons(rng: np.random.Generator, count: int = 20, h: float = DEFAULT_STEP) -> GradientCheck:
    """Half the nets are checked as policies, half as value functions."""
    worst = 0.0
    for index in range(count):
        input_dim = int(rng.integers(1, MAX_INPUT_DIM + 1))
        hidden = int(rng.integers(2, 9))
        batch = 4
        x = _random_inputs(rng, batch, input_dim)
        if index % 2 == 0:
            outputs = int(rng.integers(2, 6))
            net = classical.PerceptronNet(input_dim, outputs, hidden, vqc.ACTOR)
            net.reset_parameters(rng)
            actions = rng.integers(0, outputs, size=batch)
            weights = rng.normal(size=batch)
            analytic = classical.log_prob_gradient(net, x, actions, weights)

            def objective(p: np.ndarray) -> float:
                net.set_flat_params(p)
                probs = classical.policy_probs(net, x)
                return float(np.sum(weights * np.log(probs[np.arange(batch), actions])))

        else:
            net = classical.PerceptronNet(input_dim, 1, hidden, vqc.CRITIC)
            net.reset_parameters(rng)
            targets = rng.normal(size=batch)
            _, analytic = classical.squared_error_gradient(net, x, targets)

            def objective(p: np.ndarray) -> float:
                net.set_flat_params(p)
                return float(np.sum((targets - classical.values(net, x)) ** 2))

        params = net.flat_params()
        numeric = central_difference(objective, params, h)
        net.set_flat_params(params)
        worst = max(worst, float(np.max(np.abs(analytic - numeric))))
    return GradientCheck("perceptron", count, worst)


def run_gradient_checks(
    seed: int = 0,
    circuits: int = 100,
    perceptrons: int = 20,
    learners: int = 10,
    h: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    report = GradcheckReport(tolerance=tolerance)
    report.checks.append(check_circuits(rng, circuits, h))
    report.checks.append(check_quantum_actors(rng, learners, h))
    report.checks.append(check_quantum_critics(rng, learners, h))
    report.checks.append(check_perceptrons(rng, perceptrons, h))
    for check in report.checks:
        logger.info("%s: %d cases, max error %.3e", check.label, check.cases, check.max_abs_error)
    return report
