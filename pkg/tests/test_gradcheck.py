"""Test the finite-difference gradient checks."""

import numpy as np
import pytest

from aerie import gradcheck as gc


def test_central_difference_of_quadratic():
    grad = gc.central_difference(lambda p: np.sum(p**2), np.array([1.0, -2.0, 0.5]))
    np.testing.assert_allclose(grad, [2.0, -4.0, 1.0], atol=1e-8)


def test_central_difference_shape_for_vector_output():
    grad = gc.central_difference(lambda p: np.array([p[0] * p[1], p[1]]), np.array([2.0, 3.0]))
    assert grad.shape == (2, 2)
    np.testing.assert_allclose(grad, [[3.0, 2.0], [0.0, 1.0]], atol=1e-8)


def test_random_circuit_limits():
    rng = np.random.default_rng(0)
    for _ in range(50):
        model = gc.random_circuit(rng)
        assert 1 <= model.num_qubits <= gc.MAX_QUBITS
        assert 1 <= model.num_blocks <= gc.MAX_BLOCKS
        assert 0 <= model.input_dim <= gc.MAX_INPUT_DIM


def test_all_wires_reads_every_qubit():
    rng = np.random.default_rng(1)
    model = gc.random_circuit(rng, all_wires=True)
    assert model.observable_wires == tuple(range(model.num_qubits))


def test_gradient_checks_pass():
    report = gc.run_gradient_checks(seed=2, circuits=10, perceptrons=4, learners=2)
    assert [c.label for c in report.checks] == [
        "circuit readouts",
        "actor log-probability",
        "critic squared error",
        "perceptron",
    ]
    assert report.passed
    assert report.max_error < gc.DEFAULT_TOLERANCE
    doc = report.as_dict()
    assert doc["passed"] is True
    assert len(doc["checks"]) == 4


@pytest.mark.slow
def test_full_gradient_check_suite():
    assert gc.run_gradient_checks(seed=0).passed


def test_failed_check_is_reported():
    report = gc.GradcheckReport([gc.GradientCheck("x", 1, 1e-3)], tolerance=1e-5)
    assert not report.passed
    assert report.max_error == 1e-3
    assert gc.GradcheckReport().max_error == 0.0
