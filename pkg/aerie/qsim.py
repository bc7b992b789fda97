"""Dense statevector simulation for small registers.

Basis states are ordered with qubit 0 as the most significant bit, so the
amplitude of |q0 q1 ... q_{n-1}> sits at index sum(q_i * 2**(n-1-i)).

Besides the single-state API (``init_state``, ``apply_gate``, ``expect_z``)
the module exposes batched kernels that act on an ``(K, 2**n)`` array of K
independent states. The variational circuits use those directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from aerie.errors import ConfigurationError, UsageError

MAX_QUBITS = 16


class GateKind(str, Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CNOT = "CNOT"
    CU3 = "CU3"


_ANGLE_COUNT = {
    GateKind.RX: 1,
    GateKind.RY: 1,
    GateKind.RZ: 1,
    GateKind.CNOT: 0,
    GateKind.CU3: 3,
}
_TWO_QUBIT = {GateKind.CNOT, GateKind.CU3}


@dataclass(frozen=True)
class GateOp:
    """One gate. ``wires`` is ``(target,)`` or ``(control, target)``."""

    kind: GateKind
    wires: tuple[int, ...]
    angles: tuple[float, ...] = ()

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "wires", tuple(int(w) for w in self.wires))
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        expected_wires = 2 if kind in _TWO_QUBIT else 1
        if len(self.wires) != expected_wires:
            raise UsageError(f"{kind.value} acts on {expected_wires} wire(s), got {self.wires}")
        if len(set(self.wires)) != len(self.wires):
            raise UsageError(f"{kind.value} wires must be distinct, got {self.wires}")
        if len(self.angles) != _ANGLE_COUNT[kind]:
            raise UsageError(
                f"{kind.value} takes {_ANGLE_COUNT[kind]} angle(s), got {len(self.angles)}"
            )

    @property
    def target(self) -> int:
        return self.wires[-1]

    @property
    def control(self) -> int | None:
        return self.wires[0] if len(self.wires) == 2 else None


@dataclass(frozen=True)
class Statevector:
    num_qubits: int
    amplitudes: np.ndarray

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def _check_register(num_qubits: int) -> None:
    if not isinstance(num_qubits, (int, np.integer)) or not 1 <= num_qubits <= MAX_QUBITS:
        raise ConfigurationError(
            f"register size must be an integer in [1, {MAX_QUBITS}], got {num_qubits!r}"
        )


def _check_wires(wires: Sequence[int], num_qubits: int) -> None:
    for wire in wires:
        if not 0 <= wire < num_qubits:
            raise UsageError(f"wire {wire} out of range for a {num_qubits}-qubit register")


def init_state(num_qubits: int) -> Statevector:
    """|0...0> on ``num_qubits`` qubits."""
    _check_register(num_qubits)
    amplitudes = np.zeros(2**num_qubits, dtype=np.complex128)
    amplitudes[0] = 1.0
    return Statevector(int(num_qubits), amplitudes)


# -- gate matrices -----------------------------------------------------------
# Angle arguments may be scalars or arrays; the result has shape (..., 2, 2).


def rx_matrix(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    out = np.empty(theta.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c
    out[..., 0, 1] = -1j * s
    out[..., 1, 0] = -1j * s
    out[..., 1, 1] = c
    return out


def ry_matrix(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    out = np.empty(theta.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def rz_matrix(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = np.exp(-0.5j * theta)
    out[..., 1, 1] = np.exp(0.5j * theta)
    return out


def u3_matrix(theta, phi, lam) -> np.ndarray:
    """Standard three-angle single-qubit rotation U3(theta, phi, lambda)."""
    theta, phi, lam = np.broadcast_arrays(
        np.asarray(theta, dtype=float), np.asarray(phi, dtype=float), np.asarray(lam, dtype=float)
    )
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    out = np.empty(theta.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c
    out[..., 0, 1] = -np.exp(1j * lam) * s
    out[..., 1, 0] = np.exp(1j * phi) * s
    out[..., 1, 1] = np.exp(1j * (phi + lam)) * c
    return out


PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def target_matrix(gate: GateOp) -> np.ndarray:
    """The 2x2 block applied to the target wire (conditionally for controlled kinds)."""
    if gate.kind is GateKind.RX:
        return rx_matrix(gate.angles[0])
    if gate.kind is GateKind.RY:
        return ry_matrix(gate.angles[0])
    if gate.kind is GateKind.RZ:
        return rz_matrix(gate.angles[0])
    if gate.kind is GateKind.CNOT:
        return PAULI_X
    return u3_matrix(*gate.angles)


def gate_unitary(gate: GateOp) -> np.ndarray:
    """Full unitary on the gate's own wires (control first for two-qubit kinds)."""
    block = target_matrix(gate)
    if gate.control is None:
        return block
    full = np.eye(4, dtype=np.complex128)
    full[2:, 2:] = block
    return full


# -- batched kernels -----------------------------------------------------------


def _entries(mats: np.ndarray, extra_dims: int):
    mats = np.asarray(mats, dtype=np.complex128)
    if mats.ndim == 2:
        mats = mats[None]
    pad = (slice(None),) + (None,) * extra_dims
    return (mats[:, 0, 0][pad], mats[:, 0, 1][pad], mats[:, 1, 0][pad], mats[:, 1, 1][pad])


def apply_single(amps: np.ndarray, mats: np.ndarray, wire: int, num_qubits: int) -> np.ndarray:
    """Apply one 2x2 matrix per batch row (or one shared matrix) on ``wire``."""
    k = amps.shape[0]
    view = amps.reshape(k, 2**wire, 2, 2 ** (num_qubits - wire - 1))
    a0, a1 = view[:, :, 0, :], view[:, :, 1, :]
    m00, m01, m10, m11 = _entries(mats, 2)
    out = np.empty_like(view)
    out[:, :, 0, :] = m00 * a0 + m01 * a1
    out[:, :, 1, :] = m10 * a0 + m11 * a1
    return out.reshape(k, -1)


def apply_controlled(
    amps: np.ndarray, mats: np.ndarray, control: int, target: int, num_qubits: int
) -> np.ndarray:
    """Apply a 2x2 matrix on ``target`` in the subspace where ``control`` is 1."""
    k = amps.shape[0]
    tensor = amps.reshape((k,) + (2,) * num_qubits)
    tensor = np.moveaxis(tensor, (1 + control, 1 + target), (1, 2))
    moved_shape = tensor.shape
    view = tensor.reshape(k, 2, 2, -1)
    out = view.copy()
    a0, a1 = view[:, 1, 0, :], view[:, 1, 1, :]
    m00, m01, m10, m11 = _entries(mats, 1)
    out[:, 1, 0, :] = m00 * a0 + m01 * a1
    out[:, 1, 1, :] = m10 * a0 + m11 * a1
    out = np.moveaxis(out.reshape(moved_shape), (1, 2), (1 + control, 1 + target))
    return np.ascontiguousarray(out).reshape(k, -1)


def apply_cnot(amps: np.ndarray, control: int, target: int, num_qubits: int) -> np.ndarray:
    return apply_controlled(amps, PAULI_X, control, target, num_qubits)


def expect_z_batch(amps: np.ndarray, wire: int, num_qubits: int) -> np.ndarray:
    """<Z_wire> for every row of a batch of states."""
    k = amps.shape[0]
    probs = (np.abs(amps) ** 2).reshape(k, 2**wire, 2, -1)
    return probs[:, :, 0, :].sum(axis=(1, 2)) - probs[:, :, 1, :].sum(axis=(1, 2))


# -- single-state API -----------------------------------------------------------


def apply_gate(state: Statevector, gate: GateOp) -> Statevector:
    """Return the state transformed by ``gate``; the input is left untouched."""
    _check_wires(gate.wires, state.num_qubits)
    amps = state.amplitudes[None, :]
    block = target_matrix(gate)
    if gate.control is None:
        out = apply_single(amps, block, gate.target, state.num_qubits)
    else:
        out = apply_controlled(amps, block, gate.control, gate.target, state.num_qubits)
    return Statevector(state.num_qubits, out[0])


def run_gates(state: Statevector, gates: Sequence[GateOp]) -> Statevector:
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def expect_z(state: Statevector, wire: int) -> float:
    """Expectation of Pauli-Z on ``wire``, in [-1, 1]."""
    _check_wires([wire], state.num_qubits)
    value = float(expect_z_batch(state.amplitudes[None, :], wire, state.num_qubits)[0])
    return min(1.0, max(-1.0, value))
