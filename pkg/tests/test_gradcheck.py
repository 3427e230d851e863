import numpy as np
import pytest

from src.errors import GradcheckFailure
from src.gradcheck import (
    ANALYTIC_VS_SHIFT_ATOL,
    FD_FLOOR,
    SHIFT_VS_FD_RTOL,
    finite_difference,
    random_circuit,
    relative_error,
    run_gradcheck,
)
from src.vqc import grad_input_analytic, grad_input_shift, run


def test_relative_error_uses_floor():
    assert relative_error([1.0, 1.0], [1.0, 1.0]) == 0.0
    assert relative_error([3.0, 4.0], [0.0, 0.0]) == pytest.approx(5e12)
    assert relative_error([1e-6], [0.0], floor=1e-3) == pytest.approx(1e-3)


def test_finite_difference_of_quadratic():
    a = np.array([[1.0, 2.0], [0.5, -1.0]])
    x = np.array([0.3, -0.7])
    jacobian = finite_difference(lambda v: a @ (v ** 2), x)
    np.testing.assert_allclose(jacobian, a * (2 * x)[None, :], atol=1e-9)


def test_random_circuits_are_valid(rng):
    circuit = random_circuit(3, 2, rng, m=2)
    assert (circuit.n, circuit.blocks, circuit.m) == (3, 2, 2)
    assert all(set(label) != {"I"} for label in circuit.observables.labels)
    single = random_circuit(1, 1, rng, m=1)
    assert single.ansatz.entanglers == [[]]


def test_small_gradcheck_passes():
    report = run_gradcheck(qubits=3, blocks=2, trials=5, seed=1)
    assert report.passed
    assert report.max_analytic_vs_shift <= ANALYTIC_VS_SHIFT_ATOL
    assert report.to_dict()["passed"] is True
    report.raise_for_failure()


def test_wrong_shift_is_caught():
    report = run_gradcheck(qubits=2, blocks=1, trials=2, seed=1, shift=1.0)
    assert not report.passed
    with pytest.raises(GradcheckFailure) as info:
        report.raise_for_failure()
    assert info.value.worst_case["trial"] in (0, 1)


def test_gradcheck_argument_validation():
    with pytest.raises(ValueError):
        run_gradcheck(trials=0)
    with pytest.raises(ValueError):
        run_gradcheck(qubits=9, trials=1)


def test_gradient_paths_agree_across_sizes_and_depths(rng):
    grid = [(n, blocks) for n in (2, 4, 6) for blocks in (1, 2, 4)]
    for trial in range(50):
        n, blocks = grid[trial % len(grid)]
        circuit = random_circuit(n, blocks, rng, m=2)
        x = rng.normal(size=n)
        theta = rng.uniform(-np.pi, np.pi, size=(blocks, n))
        shifted = grad_input_shift(x, theta, circuit)
        np.testing.assert_allclose(grad_input_analytic(x, theta, circuit), shifted, atol=ANALYTIC_VS_SHIFT_ATOL)
        numeric = finite_difference(lambda v: run(v, theta, circuit), x)
        assert relative_error(shifted, numeric, floor=FD_FLOOR) < SHIFT_VS_FD_RTOL, (n, blocks, trial)
