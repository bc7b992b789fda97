"""Single-hidden-layer perceptrons for the classical actor-critic baseline."""

from __future__ import annotations

import math
from typing import Any

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from aerie.errors import CheckpointError, UsageError

CHECKPOINT_VERSION = 1
DEFAULT_HIDDEN_WIDTH = 64


class PerceptronNet(nn.Module):
    """input -> Linear -> ReLU -> Linear.

    The actor reads the output as logits of a softmax policy; the critic
    has a single linear output.
    """

    def __init__(self, input_dim: int, output_dim: int, hidden_width: int = DEFAULT_HIDDEN_WIDTH, role: str = "actor"):
        super().__init__()
        if input_dim < 1 or output_dim < 1 or hidden_width < 1:
            raise UsageError("perceptron dimensions must be positive")
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.hidden_width = hidden_width
        self.role = role
        self.fc1 = nn.Linear(input_dim, hidden_width, dtype=torch.float64)
        self.fc2 = nn.Linear(hidden_width, output_dim, dtype=torch.float64)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.relu(self.fc1(x)))

    def reset_parameters(self, rng: np.random.Generator) -> None:
        """Uniform(+-1/sqrt(fan_in)) init drawn from ``rng`` so runs are seed-stable."""
        with torch.no_grad():
            for layer in (self.fc1, self.fc2):
                bound = 1.0 / math.sqrt(layer.in_features)
                layer.weight.copy_(torch.from_numpy(rng.uniform(-bound, bound, size=tuple(layer.weight.shape))))
                layer.bias.copy_(torch.from_numpy(rng.uniform(-bound, bound, size=tuple(layer.bias.shape))))

    def count_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)

    def flat_params(self) -> np.ndarray:
        return parameters_to_vector(self.parameters()).detach().numpy().copy()

    def set_flat_params(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != self.count_parameters():
            raise UsageError(f"expected {self.count_parameters()} parameters, got {values.size}")
        with torch.no_grad():
            vector_to_parameters(torch.from_numpy(values.copy()), self.parameters())


def perceptron_param_count(input_dim: int, output_dim: int, hidden_width: int = DEFAULT_HIDDEN_WIDTH) -> int:
    return (input_dim + 1) * hidden_width + (hidden_width + 1) * output_dim


def as_tensor(x) -> torch.Tensor:
    return torch.as_tensor(np.atleast_2d(np.asarray(x, dtype=float)))


def policy_probs(net: PerceptronNet, inputs) -> np.ndarray:
    with torch.no_grad():
        return F.softmax(net(as_tensor(inputs)), dim=-1).numpy()


def values(net: PerceptronNet, inputs) -> np.ndarray:
    with torch.no_grad():
        return net(as_tensor(inputs))[:, 0].numpy()


def flat_grad(objective: torch.Tensor, net: PerceptronNet) -> np.ndarray:
    grads = torch.autograd.grad(objective, list(net.parameters()))
    return torch.cat([g.reshape(-1) for g in grads]).detach().numpy()


def log_prob_gradient(net: PerceptronNet, inputs, actions, weights) -> np.ndarray:
    """Gradient of sum_b w_b * log pi(a_b | x_b) w.r.t. the flat parameters."""
    log_probs = F.log_softmax(net(as_tensor(inputs)), dim=-1)
    picked = log_probs.gather(1, torch.as_tensor(np.asarray(actions, dtype=np.int64)).reshape(-1, 1))[:, 0]
    objective = torch.sum(torch.as_tensor(np.asarray(weights, dtype=float)) * picked)
    return flat_grad(objective, net)


def squared_error_gradient(net: PerceptronNet, inputs, targets) -> tuple[float, np.ndarray]:
    """sum_b (y_b - V(x_b))^2 and its gradient, with the targets held fixed."""
    residual = torch.as_tensor(np.asarray(targets, dtype=float)) - net(as_tensor(inputs))[:, 0]
    loss = torch.sum(residual**2)
    return float(loss.detach()), flat_grad(loss, net)


def to_document(net: PerceptronNet) -> dict[str, Any]:
    return {
        "version": CHECKPOINT_VERSION,
        "role": net.role,
        "input_dim": net.input_dim,
        "hidden_width": net.hidden_width,
        "output_dim": net.output_dim,
        "params": [float(p) for p in net.flat_params()],
    }


def from_document(doc: dict[str, Any]) -> PerceptronNet:
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported perceptron document version {doc.get('version')!r}")
    try:
        net = PerceptronNet(int(doc["input_dim"]), int(doc["output_dim"]), int(doc["hidden_width"]), str(doc["role"]))
        net.set_flat_params(np.asarray(doc["params"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed perceptron document: {exc}") from exc
    return net
