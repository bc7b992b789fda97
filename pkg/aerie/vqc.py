"""Variational quantum circuits with data re-uploading.

A circuit is ``num_blocks`` repetitions of

1. encoding: RX(arctan(x_j)) on wire j for the block's slice of the input,
2. trainable layer: U3(theta, phi, lambda) on every wire, realised as
   RZ(lambda), RY(theta), RZ(phi),
3. ring entanglement with CNOTs,

followed by Pauli-Z readout on the observable wires. Inputs wider than the
register are cut into slices of ``num_qubits`` coordinates and the blocks
cycle through those slices.

Every trainable angle sits in exactly one Pauli rotation, so the two-term
shift rule with the 1/2 factor gives the exact derivative.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from aerie import qsim
from aerie.errors import CheckpointError, DataError, UsageError
from aerie.qsim import GateKind, GateOp

CHECKPOINT_VERSION = 1
ACTOR = "actor"
CRITIC = "critic"
SHIFT = np.pi / 2
ANGLES_PER_QUBIT = 3

# Upper bound on circuits simulated in one vectorised call.
_BATCH_CHUNK = 4096


def default_blocks(input_dim: int, num_qubits: int) -> int:
    """Smallest block count that uploads every input coordinate at least once."""
    return max(1, math.ceil(input_dim / num_qubits))


@dataclass
class CircuitModel:
    num_qubits: int
    num_blocks: int
    input_dim: int
    observable_wires: tuple[int, ...]
    params: np.ndarray = field(repr=False)
    role: str = ACTOR

    def __post_init__(self):
        qsim._check_register(self.num_qubits)
        if self.num_blocks < 0 or self.input_dim < 0:
            raise UsageError("num_blocks and input_dim must be non-negative")
        self.observable_wires = tuple(int(w) for w in self.observable_wires)
        if not self.observable_wires:
            raise UsageError("a circuit needs at least one observable wire")
        qsim._check_wires(self.observable_wires, self.num_qubits)
        self.params = np.array(self.params, dtype=float).reshape(-1)
        if self.params.size != self.num_params:
            raise UsageError(
                f"expected {self.num_params} parameters "
                f"({self.num_blocks} blocks x {self.num_qubits} qubits x 3), got {self.params.size}"
            )

    @property
    def num_params(self) -> int:
        return self.num_blocks * self.num_qubits * ANGLES_PER_QUBIT

    @property
    def num_outputs(self) -> int:
        return len(self.observable_wires)

    @classmethod
    def create(
        cls,
        num_qubits: int,
        input_dim: int,
        observable_wires: Sequence[int],
        num_blocks: Optional[int] = None,
        role: str = ACTOR,
        rng: Optional[np.random.Generator] = None,
    ) -> "CircuitModel":
        """Build a circuit with parameters drawn uniformly from [-pi, pi)."""
        if num_blocks is None:
            num_blocks = default_blocks(input_dim, num_qubits)
        rng = rng or np.random.default_rng()
        size = num_blocks * num_qubits * ANGLES_PER_QUBIT
        params = rng.uniform(-np.pi, np.pi, size=size)
        return cls(num_qubits, num_blocks, input_dim, tuple(observable_wires), params, role)

    def with_params(self, params: np.ndarray) -> "CircuitModel":
        return dataclasses.replace(self, params=np.array(params, dtype=float))


@dataclass(frozen=True)
class ObservableReadout:
    values: np.ndarray
    scale: float = 1.0

    @property
    def scaled(self) -> np.ndarray:
        return self.scale * self.values


@dataclass(frozen=True)
class OperationCounts:
    encoder_ops: int
    parameterized_gates: int
    measurements: int

    @property
    def total(self) -> int:
        return self.encoder_ops + self.parameterized_gates + self.measurements


# -- encoding -----------------------------------------------------------------


def _as_inputs(model: CircuitModel, x) -> np.ndarray:
    data = np.asarray(x, dtype=float)
    if data.ndim == 1:
        data = data[None, :]
    if data.ndim != 2 or data.shape[1] != model.input_dim:
        raise UsageError(f"circuit expects inputs of width {model.input_dim}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(data)):
        raise DataError("circuit input contains non-finite entries")
    return data


def _block_angles(inputs: np.ndarray, block_index: int, num_qubits: int) -> np.ndarray:
    """Encoding angles of one block for a batch of inputs, shape (K, num_qubits)."""
    k, width = inputs.shape
    angles = np.zeros((k, num_qubits))
    if width == 0:
        return angles
    chunk = block_index % math.ceil(width / num_qubits)
    window = inputs[:, chunk * num_qubits : (chunk + 1) * num_qubits]
    angles[:, : window.shape[1]] = np.arctan(window)
    return angles


def encode_input(x, block_index: int, model: CircuitModel) -> list[GateOp]:
    """Encoding gates of block ``block_index`` for a single input vector."""
    data = _as_inputs(model, x)
    if model.input_dim == 0:
        return []
    chunk = block_index % math.ceil(model.input_dim / model.num_qubits)
    covered = min(model.num_qubits, model.input_dim - chunk * model.num_qubits)
    angles = _block_angles(data, block_index, model.num_qubits)[0]
    return [GateOp(GateKind.RX, (wire,), (angles[wire],)) for wire in range(covered)]


def entangling_pairs(num_qubits: int) -> list[tuple[int, int]]:
    if num_qubits == 1:
        return []
    if num_qubits == 2:
        return [(0, 1)]
    return [(wire, (wire + 1) % num_qubits) for wire in range(num_qubits)]


def build_circuit(model: CircuitModel, x) -> list[GateOp]:
    """Explicit gate list of the whole circuit for one input."""
    gates: list[GateOp] = []
    theta = model.params.reshape(model.num_blocks, model.num_qubits, ANGLES_PER_QUBIT)
    for block in range(model.num_blocks):
        gates.extend(encode_input(x, block, model))
        for wire in range(model.num_qubits):
            t, p, lam = theta[block, wire]
            gates.append(GateOp(GateKind.RZ, (wire,), (lam,)))
            gates.append(GateOp(GateKind.RY, (wire,), (t,)))
            gates.append(GateOp(GateKind.RZ, (wire,), (p,)))
        for control, target in entangling_pairs(model.num_qubits):
            gates.append(GateOp(GateKind.CNOT, (control, target)))
    return gates


# -- evaluation ---------------------------------------------------------------


def _simulate(model: CircuitModel, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Readouts for K (params, input) rows, shape (K, num_outputs)."""
    q = model.num_qubits
    k = params.shape[0]
    amps = np.zeros((k, 2**q), dtype=np.complex128)
    amps[:, 0] = 1.0
    blocks = params.reshape(k, model.num_blocks, q, ANGLES_PER_QUBIT)
    pairs = entangling_pairs(q)
    for block in range(model.num_blocks):
        enc = qsim.rx_matrix(_block_angles(inputs, block, q))
        for wire in range(q):
            t, p, lam = blocks[:, block, wire, 0], blocks[:, block, wire, 1], blocks[:, block, wire, 2]
            fused = qsim.rz_matrix(p) @ qsim.ry_matrix(t) @ qsim.rz_matrix(lam) @ enc[:, wire]
            amps = qsim.apply_single(amps, fused, wire, q)
        for control, target in pairs:
            amps = qsim.apply_cnot(amps, control, target, q)
    return np.stack([qsim.expect_z_batch(amps, w, q) for w in model.observable_wires], axis=1)


def evaluate_batch(model: CircuitModel, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if params.shape[0] == 1 and inputs.shape[0] > 1:
        params = np.broadcast_to(params, (inputs.shape[0], params.shape[1]))
    out = np.empty((inputs.shape[0], model.num_outputs))
    for start in range(0, inputs.shape[0], _BATCH_CHUNK):
        stop = start + _BATCH_CHUNK
        out[start:stop] = _simulate(model, params[start:stop], inputs[start:stop])
    return np.clip(out, -1.0, 1.0)


def readouts(model: CircuitModel, inputs) -> np.ndarray:
    """Z readouts for a batch of inputs, shape (B, num_outputs)."""
    data = _as_inputs(model, inputs)
    return evaluate_batch(model, model.params[None, :], data)


def forward(model: CircuitModel, x, scale: float = 1.0) -> ObservableReadout:
    return ObservableReadout(readouts(model, x)[0], scale)


def parameter_shift_jacobian(model: CircuitModel, inputs) -> np.ndarray:
    """d<O_j>/d params for a batch of inputs, shape (B, num_outputs, num_params).

    All 2 * num_params shifted circuits of every input are evaluated in one
    vectorised pass.
    """
    data = _as_inputs(model, inputs)
    batch, n_params = data.shape[0], model.num_params
    if n_params == 0:
        return np.zeros((batch, model.num_outputs, 0))
    shifts = SHIFT * np.eye(n_params)
    shifted = np.concatenate([model.params + shifts, model.params - shifts])
    params = np.tile(shifted, (batch, 1))
    repeated = np.repeat(data, 2 * n_params, axis=0)
    values = evaluate_batch(model, params, repeated).reshape(batch, 2, n_params, model.num_outputs)
    grad = 0.5 * (values[:, 0] - values[:, 1])
    return np.transpose(grad, (0, 2, 1))


def parameter_shift_grad(model: CircuitModel, x, obs_index: int) -> np.ndarray:
    if not 0 <= obs_index < model.num_outputs:
        raise UsageError(f"observable index {obs_index} out of range")
    return parameter_shift_jacobian(model, x)[0, obs_index]


# -- actor and critic heads ---------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    weights = np.exp(shifted)
    return weights / np.sum(weights, axis=-1, keepdims=True)


def actor_policy(model: CircuitModel, obs_vec, beta_a: float) -> np.ndarray:
    """softmax(beta_a * <Z>) over one action per observable wire."""
    return softmax(beta_a * forward(model, obs_vec).values)


def critic_value(model: CircuitModel, state_vec, beta_c: float) -> float:
    if model.num_outputs != 1:
        raise UsageError(f"a critic reads exactly one wire, this circuit reads {model.num_outputs}")
    return float(forward(model, state_vec, beta_c).scaled[0])


# -- complexity ---------------------------------------------------------------


def complexity_estimate(model: CircuitModel, role: str) -> OperationCounts:
    """Encoder, parameterised-gate and measurement counts of one execution."""
    if role not in (ACTOR, CRITIC):
        raise UsageError(f"role must be '{ACTOR}' or '{CRITIC}', got {role!r}")
    measurements = model.num_outputs if role == ACTOR else 1
    return OperationCounts(model.input_dim, model.num_params, measurements)


def qmacn_training_cost(
    critic: OperationCounts, actor: OperationCounts, steps: int, agents: int, num_actions: int
) -> int:
    """Elementary units per epoch: T * (C_QC + M * (|A| + C_QA))."""
    return steps * (critic.total + agents * (num_actions + actor.total))


def classical_actor_cost(obs_dim: int, num_params: int, num_actions: int) -> int:
    return obs_dim * num_params * num_actions


def classical_critic_cost(state_dim: int, num_params: int) -> int:
    return state_dim * num_params


def cmarl_training_cost(actor_cost: int, critic_cost: int, steps: int, agents: int) -> int:
    """Classical counterpart: T * (M * C_CA + C_CC)."""
    return steps * (agents * actor_cost + critic_cost)


# -- checkpoint documents -----------------------------------------------------


def to_document(model: CircuitModel) -> dict[str, Any]:
    return {
        "version": CHECKPOINT_VERSION,
        "role": model.role,
        "num_qubits": model.num_qubits,
        "num_blocks": model.num_blocks,
        "input_dim": model.input_dim,
        "observable_wires": list(model.observable_wires),
        "params": [float(p) for p in model.params],
    }


def from_document(doc: dict[str, Any]) -> CircuitModel:
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported circuit document version {doc.get('version')!r}")
    try:
        return CircuitModel(
            num_qubits=int(doc["num_qubits"]),
            num_blocks=int(doc["num_blocks"]),
            input_dim=int(doc["input_dim"]),
            observable_wires=tuple(doc["observable_wires"]),
            params=np.asarray(doc["params"], dtype=float),
            role=str(doc["role"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed circuit document: {exc}") from exc
