"""Test variational circuits, the shift rule and the actor/critic heads."""

import numpy as np
import pytest

from aerie import qsim, vqc
from aerie.errors import CheckpointError, DataError, UsageError
from aerie.gradcheck import central_difference
from aerie.qsim import GateKind
from aerie.vqc import CircuitModel


def _single_qubit(theta, phi=0.0, lam=0.0, input_dim=0):
    return CircuitModel(1, 1, input_dim, (0,), np.array([theta, phi, lam]))


def test_param_layout():
    model = CircuitModel.create(4, 10, (0, 1), num_blocks=3, rng=np.random.default_rng(0))
    assert model.num_params == 3 * 4 * 3
    assert model.params.shape == (36,)
    assert np.all(np.abs(model.params) <= np.pi)


def test_default_blocks_cover_every_coordinate():
    assert vqc.default_blocks(207, 5) == 42
    assert vqc.default_blocks(200, 8) == 25
    assert vqc.default_blocks(0, 3) == 1
    model = CircuitModel.create(5, 207, range(5), rng=np.random.default_rng(0))
    encoded = {g.wires[0] + 5 * (b % 42) for b in range(model.num_blocks) for g in vqc.encode_input(np.ones(207), b, model)}
    assert encoded == set(range(207))


def test_wrong_param_count_rejected():
    with pytest.raises(UsageError):
        CircuitModel(2, 1, 0, (0,), np.zeros(5))
    with pytest.raises(UsageError):
        CircuitModel(2, 1, 0, (2,), np.zeros(6))


def test_encoding_slices_cycle():
    model = CircuitModel(2, 3, 4, (0,), np.zeros(18))
    x = np.array([0.1, 0.2, 0.3, 0.4])
    angles = [[g.angles[0] for g in vqc.encode_input(x, b, model)] for b in range(3)]
    np.testing.assert_allclose(angles[0], np.arctan([0.1, 0.2]))
    np.testing.assert_allclose(angles[1], np.arctan([0.3, 0.4]))
    np.testing.assert_allclose(angles[2], angles[0])


def test_encoding_angles_bounded_and_zero_for_zero_input():
    model = CircuitModel(3, 1, 3, (0,), np.zeros(9))
    assert all(g.angles[0] == 0.0 for g in vqc.encode_input(np.zeros(3), 0, model))
    big = vqc.encode_input(np.array([1e6, -1e6, 0.0]), 0, model)
    assert all(abs(g.angles[0]) < np.pi / 2 for g in big)


def test_non_finite_input_is_data_error():
    model = CircuitModel(2, 1, 2, (0,), np.zeros(6))
    with pytest.raises(DataError):
        vqc.forward(model, [np.nan, 0.0])
    with pytest.raises(UsageError):
        vqc.forward(model, [0.0, 0.0, 0.0])


def test_zero_blocks_read_ground_state():
    model = CircuitModel(3, 0, 4, (0, 1, 2), np.zeros(0))
    np.testing.assert_allclose(vqc.forward(model, np.ones(4)).values, [1.0, 1.0, 1.0])


def test_single_qubit_readout_is_cosine():
    for theta in (0.3, 1.1, -2.0):
        readout = vqc.forward(_single_qubit(theta, 0.4, -0.9), np.zeros((1, 0)))
        assert readout.values[0] == pytest.approx(np.cos(theta), abs=1e-12)


def test_fused_kernel_matches_gate_list():
    rng = np.random.default_rng(11)
    for _ in range(10):
        model = CircuitModel.create(int(rng.integers(1, 6)), int(rng.integers(0, 9)), (0,), num_blocks=2, rng=rng)
        x = rng.normal(size=model.input_dim)
        state = qsim.run_gates(qsim.init_state(model.num_qubits), vqc.build_circuit(model, x))
        assert vqc.forward(model, x).values[0] == pytest.approx(qsim.expect_z(state, 0), abs=1e-12)


def test_ring_entanglement():
    assert vqc.entangling_pairs(1) == []
    assert vqc.entangling_pairs(2) == [(0, 1)]
    assert vqc.entangling_pairs(3) == [(0, 1), (1, 2), (2, 0)]
    gates = vqc.build_circuit(CircuitModel(3, 1, 0, (0,), np.zeros(9)), np.zeros(0))
    assert sum(g.kind is GateKind.CNOT for g in gates) == 3


def test_readouts_are_deterministic_and_bounded():
    rng = np.random.default_rng(2)
    model = CircuitModel.create(4, 6, (0, 1, 2, 3), num_blocks=2, rng=rng)
    x = rng.normal(size=(20, 6))
    first = vqc.readouts(model, x)
    np.testing.assert_array_equal(first, vqc.readouts(model, x))
    assert np.all(np.abs(first) <= 1.0)


@pytest.mark.parametrize("theta", [0.5, 1.0])
def test_shift_rule_single_rotation(theta):
    grad = vqc.parameter_shift_grad(_single_qubit(theta), np.zeros(0), 0)
    assert grad[0] == pytest.approx(-np.sin(theta), abs=1e-12)
    assert grad[1:] == pytest.approx([0.0, 0.0], abs=1e-12)


def test_shift_rule_stationary_point():
    assert vqc.parameter_shift_grad(_single_qubit(0.0), np.zeros(0), 0)[0] == pytest.approx(0.0, abs=1e-12)


def test_shift_rule_matches_finite_differences():
    rng = np.random.default_rng(4)
    model = CircuitModel.create(4, 5, (0, 2), num_blocks=2, rng=rng)
    x = rng.normal(size=5)
    analytic = vqc.parameter_shift_jacobian(model, x)[0]
    numeric = central_difference(lambda p: vqc.readouts(model.with_params(p), x)[0], model.params)
    assert np.max(np.abs(analytic - numeric)) < 1e-5


def test_batched_jacobian_matches_per_sample():
    rng = np.random.default_rng(6)
    model = CircuitModel.create(3, 4, (0, 1), num_blocks=2, rng=rng)
    x = rng.normal(size=(3, 4))
    batched = vqc.parameter_shift_jacobian(model, x)
    for i in range(3):
        np.testing.assert_allclose(batched[i, 1], vqc.parameter_shift_grad(model, x[i], 1), atol=1e-12)


def test_shift_grad_bad_observable_index():
    with pytest.raises(UsageError):
        vqc.parameter_shift_grad(_single_qubit(0.2), np.zeros(0), 1)


def test_policy_is_a_distribution():
    rng = np.random.default_rng(8)
    model = CircuitModel.create(5, 7, range(5), rng=rng)
    for _ in range(20):
        probs = vqc.actor_policy(model, rng.normal(size=7), beta_a=3.0)
        assert np.all(probs > 0)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)


def test_softmax_examples():
    np.testing.assert_allclose(vqc.softmax(np.full(5, 0.3)), np.full(5, 0.2))
    readouts = np.array([1.0, -1.0, 0.0, 0.0, 0.0])
    probs = vqc.softmax(5.0 * readouts)
    expected = np.exp(5.0 * readouts) / np.exp(5.0 * readouts).sum()
    np.testing.assert_allclose(probs, expected)
    assert np.argmax(probs) == 0
    assert np.argmax(vqc.softmax(readouts + 7.0)) == 0


def test_policy_uniform_at_zero_beta():
    model = CircuitModel.create(5, 3, range(5), rng=np.random.default_rng(0))
    np.testing.assert_allclose(vqc.actor_policy(model, np.ones(3), 0.0), np.full(5, 0.2))


def test_critic_value_bounds():
    assert vqc.critic_value(CircuitModel(2, 0, 3, (0,), np.zeros(0)), np.zeros(3), 15.0) == pytest.approx(15.0)
    rng = np.random.default_rng(9)
    model = CircuitModel.create(3, 6, (0,), role=vqc.CRITIC, rng=rng)
    assert vqc.critic_value(model, rng.normal(size=6), 0.0) == 0.0
    values = 15.0 * vqc.readouts(model, rng.normal(size=(1000, 6)))[:, 0]
    assert np.all(np.abs(values) <= 15.0)
    with pytest.raises(UsageError):
        vqc.critic_value(CircuitModel(2, 0, 3, (0, 1), np.zeros(0)), np.zeros(3), 1.0)


def test_complexity_counts():
    actor = CircuitModel(4, 3, 8, range(4), np.zeros(36))
    critic = CircuitModel(4, 2, 10, (0,), np.zeros(24), role=vqc.CRITIC)
    counts_a = vqc.complexity_estimate(actor, vqc.ACTOR)
    counts_c = vqc.complexity_estimate(critic, vqc.CRITIC)
    assert (counts_a.encoder_ops, counts_a.parameterized_gates, counts_a.measurements) == (8, 36, 4)
    assert (counts_c.encoder_ops, counts_c.parameterized_gates, counts_c.measurements) == (10, 24, 1)
    assert vqc.qmacn_training_cost(counts_c, counts_a, steps=30, agents=4, num_actions=5) == 30 * (35 + 4 * (5 + 48))
    assert vqc.cmarl_training_cost(vqc.classical_actor_cost(8, 100, 5), vqc.classical_critic_cost(10, 50), 30, 4) == 30 * (
        4 * 4000 + 500
    )
    with pytest.raises(UsageError):
        vqc.complexity_estimate(actor, "observer")


def test_quantum_uses_fewer_parameters_than_perceptron():
    from aerie.classical import perceptron_param_count

    for input_dim, outputs in ((207, 5), (200, 1), (12, 5)):
        blocks = vqc.default_blocks(input_dim, 5)
        assert blocks * 5 * 3 < perceptron_param_count(input_dim, outputs, 64)


def test_document_round_trip():
    model = CircuitModel.create(3, 4, (0, 2), num_blocks=2, role=vqc.ACTOR, rng=np.random.default_rng(1))
    restored = vqc.from_document(vqc.to_document(model))
    np.testing.assert_array_equal(restored.params, model.params)
    assert restored.observable_wires == (0, 2)
    x = np.linspace(-1, 1, 4)
    np.testing.assert_array_equal(vqc.readouts(restored, x), vqc.readouts(model, x))


def test_bad_documents():
    doc = vqc.to_document(_single_qubit(0.1))
    with pytest.raises(CheckpointError):
        vqc.from_document({**doc, "version": 99})
    with pytest.raises(CheckpointError):
        vqc.from_document({k: v for k, v in doc.items() if k != "params"})
