"""Test the statevector simulator."""

import numpy as np
import pytest

from aerie import qsim
from aerie.errors import ConfigurationError, UsageError
from aerie.qsim import GateKind, GateOp


def _random_gate(rng, num_qubits):
    kinds = (GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.CNOT, GateKind.CU3)
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind in (GateKind.CNOT, GateKind.CU3):
        control, target = (int(w) for w in rng.choice(num_qubits, size=2, replace=False))
        angles = tuple(rng.uniform(-np.pi, np.pi, size=3)) if kind is GateKind.CU3 else ()
        return GateOp(kind, (control, target), angles)
    return GateOp(kind, (int(rng.integers(num_qubits)),), (rng.uniform(-np.pi, np.pi),))


def _dense(gate, num_qubits):
    """Full 2**n unitary of a gate built from Kronecker products."""
    eye, proj0, proj1 = np.eye(2), np.diag([1.0, 0.0]), np.diag([0.0, 1.0])

    def kron_all(ops):
        out = np.array([[1.0 + 0j]])
        for op in ops:
            out = np.kron(out, op)
        return out

    block = qsim.target_matrix(gate)
    if gate.control is None:
        return kron_all([block if w == gate.target else eye for w in range(num_qubits)])
    off = kron_all([proj0 if w == gate.control else eye for w in range(num_qubits)])
    on = kron_all(
        [proj1 if w == gate.control else block if w == gate.target else eye for w in range(num_qubits)]
    )
    return off + on


def test_init_state_is_all_zeros():
    state = qsim.init_state(3)
    assert state.amplitudes.shape == (8,)
    assert state.amplitudes[0] == 1.0
    assert state.norm_squared() == pytest.approx(1.0)


@pytest.mark.parametrize("size", [0, 17, -1])
def test_register_size_out_of_range(size):
    with pytest.raises(ConfigurationError):
        qsim.init_state(size)


def test_ry_expectation_is_cosine():
    rng = np.random.default_rng(1)
    for theta in rng.uniform(-np.pi, np.pi, size=100):
        state = qsim.apply_gate(qsim.init_state(1), GateOp(GateKind.RY, (0,), (theta,)))
        assert abs(qsim.expect_z(state, 0) - np.cos(theta)) < 1e-10


def test_rx_pi_flips_qubit():
    state = qsim.apply_gate(qsim.init_state(2), GateOp(GateKind.RX, (1,), (np.pi,)))
    assert qsim.expect_z(state, 1) == pytest.approx(-1.0)
    assert qsim.expect_z(state, 0) == pytest.approx(1.0)


def test_cnot_entangles_bell_pair():
    state = qsim.init_state(2)
    state = qsim.apply_gate(state, GateOp(GateKind.RY, (0,), (np.pi / 2,)))
    state = qsim.apply_gate(state, GateOp(GateKind.CNOT, (0, 1)))
    np.testing.assert_allclose(state.probabilities(), [0.5, 0.0, 0.0, 0.5], atol=1e-12)


def test_qubit_zero_is_most_significant():
    state = qsim.apply_gate(qsim.init_state(3), GateOp(GateKind.RX, (0,), (np.pi,)))
    assert np.argmax(state.probabilities()) == 0b100


def test_norm_preserved_over_random_gates():
    rng = np.random.default_rng(7)
    state = qsim.init_state(5)
    for _ in range(1000):
        state = qsim.apply_gate(state, _random_gate(rng, 5))
    assert abs(state.norm_squared() - 1.0) < 1e-10


def test_gates_match_dense_unitaries():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(2, 5))
        gate = _random_gate(rng, n)
        amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
        amps /= np.linalg.norm(amps)
        state = qsim.Statevector(n, amps)
        np.testing.assert_allclose(qsim.apply_gate(state, gate).amplitudes, _dense(gate, n) @ amps, atol=1e-12)


def test_u3_is_rz_ry_rz():
    theta, phi, lam = 0.7, -1.3, 2.1
    composed = qsim.rz_matrix(phi) @ qsim.ry_matrix(theta) @ qsim.rz_matrix(lam)
    u3 = qsim.u3_matrix(theta, phi, lam)
    # Equal up to a global phase.
    phase = u3[0, 0] / composed[0, 0]
    np.testing.assert_allclose(u3, phase * composed, atol=1e-12)
    assert abs(phase) == pytest.approx(1.0)


def test_gate_unitary_is_unitary():
    gate = GateOp(GateKind.CU3, (0, 1), (0.3, 0.4, 0.5))
    u = qsim.gate_unitary(gate)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-12)


def test_batched_kernel_matches_single_state():
    rng = np.random.default_rng(5)
    thetas = rng.uniform(-np.pi, np.pi, size=4)
    amps = np.zeros((4, 8), dtype=complex)
    amps[:, 0] = 1.0
    batched = qsim.apply_single(amps, qsim.ry_matrix(thetas), 1, 3)
    for row, theta in zip(batched, thetas):
        single = qsim.apply_gate(qsim.init_state(3), GateOp(GateKind.RY, (1,), (theta,)))
        np.testing.assert_allclose(row, single.amplitudes, atol=1e-12)
    np.testing.assert_allclose(qsim.expect_z_batch(batched, 1, 3), np.cos(thetas), atol=1e-12)


def test_apply_gate_leaves_input_untouched():
    state = qsim.init_state(2)
    qsim.apply_gate(state, GateOp(GateKind.RX, (0,), (1.0,)))
    assert state.amplitudes[0] == 1.0


def test_wire_out_of_range():
    with pytest.raises(UsageError):
        qsim.apply_gate(qsim.init_state(2), GateOp(GateKind.RX, (2,), (0.1,)))
    with pytest.raises(UsageError):
        qsim.expect_z(qsim.init_state(2), 5)


def test_malformed_gates():
    with pytest.raises(UsageError):
        GateOp(GateKind.CNOT, (1, 1))
    with pytest.raises(UsageError):
        GateOp(GateKind.RX, (0,), ())
    with pytest.raises(UsageError):
        GateOp(GateKind.RY, (0, 1), (0.2,))
