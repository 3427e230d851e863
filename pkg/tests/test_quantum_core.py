import numpy as np
import pytest

from src.errors import ShapeMismatchError
from src.quantum_core import (
    HADAMARD,
    PAULI_MATRICES,
    PHASE,
    DensityMatrix,
    Observable,
    PauliAxis,
    StateVector,
    apply_cnot,
    apply_gate_kernel,
    apply_single_qubit_gate,
    density_from_state,
    expectation,
    expectation_density,
    expectations_kernel,
    pauli_expand,
    pauli_matrix,
    pauli_reconstruct,
    pauli_trace,
    real_part,
    rotation_gate,
    rotation_gates,
)
from tests.oracles import cnot, lift


def random_state(rng, n):
    amps = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
    return StateVector(n, amps / np.linalg.norm(amps))


def random_density(rng, n):
    a = rng.normal(size=(2 ** n, 2 ** n)) + 1j * rng.normal(size=(2 ** n, 2 ** n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_zero_state_measures_plus_one_on_z():
    assert expectation(StateVector.zero(3), Observable.z(2, 3)) == pytest.approx(1.0)


def test_hadamard_gives_x_eigenstate():
    state = apply_single_qubit_gate(StateVector.zero(1), HADAMARD, 1)
    assert expectation(state, Observable.from_label("X")) == pytest.approx(1.0, abs=1e-15)
    assert expectation(state, Observable.from_label("Z")) == pytest.approx(0.0, abs=1e-15)


def test_cnot_flips_target_when_control_set():
    out = apply_cnot(StateVector.basis(2, "10"), 1, 2)
    np.testing.assert_array_equal(out.amplitudes, StateVector.basis(2, "11").amplitudes)
    untouched = apply_cnot(StateVector.basis(2, "01"), 1, 2)
    np.testing.assert_array_equal(untouched.amplitudes, StateVector.basis(2, "01").amplitudes)


def test_gate_kernel_matches_dense_lift(rng):
    state = random_state(rng, 3)
    gate = rotation_gate(PauliAxis.X, 0.7) @ HADAMARD
    for q in (1, 2, 3):
        expected = lift(gate, q, 3) @ state.amplitudes
        np.testing.assert_allclose(apply_gate_kernel(state.amplitudes, gate, q), expected, atol=1e-12)


def test_cnot_kernel_matches_dense_permutation(rng):
    state = random_state(rng, 3)
    for control, target in [(1, 3), (3, 1), (2, 1)]:
        expected = cnot(control, target, 3) @ state.amplitudes
        np.testing.assert_allclose(apply_cnot(state, control, target).amplitudes, expected, atol=1e-15)


def test_batched_kernel_applies_per_row_gates(rng):
    amps = np.stack([random_state(rng, 2).amplitudes for _ in range(3)])
    gates = np.stack([rotation_gate("Y", a) for a in (0.1, 0.2, 0.3)])
    out = apply_gate_kernel(amps, gates, 2)
    for row in range(3):
        np.testing.assert_allclose(out[row], apply_gate_kernel(amps[row], gates[row], 2), atol=1e-15)


def test_identity_gate_is_bit_exact(rng):
    state = random_state(rng, 2)
    out = apply_single_qubit_gate(state, np.eye(2), 1)
    np.testing.assert_array_equal(out.amplitudes, state.amplitudes)


def test_invalid_qubit_and_axis_are_rejected():
    with pytest.raises(ValueError):
        apply_single_qubit_gate(StateVector.zero(2), HADAMARD, 3)
    with pytest.raises(ValueError):
        rotation_gate("I", 0.3)
    with pytest.raises(ShapeMismatchError):
        StateVector(2, np.ones(3))


def test_expectations_kernel_matches_dense_matrices(rng):
    state = random_state(rng, 3)
    labels = ["XYZ", "IZI", "YYX"]
    values = expectations_kernel(state.amplitudes, [Observable.from_label(l) for l in labels])
    for value, label in zip(values, labels):
        matrix = pauli_matrix([PauliAxis.parse(ch) for ch in label])
        assert value == pytest.approx((state.amplitudes.conj() @ matrix @ state.amplitudes).real, abs=1e-12)


def test_density_path_agrees_with_statevector(rng):
    state = random_state(rng, 2)
    unitary = cnot(1, 2, 2) @ lift(rotation_gate("X", 0.4), 1, 2)
    evolved = StateVector(2, unitary @ state.amplitudes)
    obs = Observable.from_label("ZX")
    assert expectation_density(density_from_state(state), unitary, obs) == pytest.approx(
        expectation(evolved, obs), abs=1e-12
    )


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        DensityMatrix(1, np.array([[0.5, 1.0], [0.0, 0.5]]))
    with pytest.raises(ValueError):
        DensityMatrix(1, np.eye(2))


def test_real_part_rejects_imaginary_residue():
    with pytest.raises(ArithmeticError):
        real_part(np.array([1.0 + 1e-6j]), "value")


def test_single_qubit_zero_state_expansion():
    coeffs = pauli_expand(density_from_state(StateVector.zero(1)))
    assert coeffs[(PauliAxis.I,)] == pytest.approx(0.5)
    assert coeffs[(PauliAxis.Z,)] == pytest.approx(0.5)
    assert coeffs.get((PauliAxis.X,), 0) == 0


def test_zero_state_expansion_has_all_iz_strings():
    coeffs = pauli_expand(density_from_state(StateVector.zero(3)))
    assert len(coeffs) == 8
    for string, value in coeffs.items():
        assert set(string) <= {PauliAxis.I, PauliAxis.Z}
        assert value == pytest.approx(1 / 8)


def test_product_state_fast_path_matches_trace_formula():
    plus = HADAMARD @ np.array([1, 0])
    minus_y = np.array([1, -1j]) / np.sqrt(2)
    psi = np.kron(plus, minus_y)
    rho = np.outer(psi, psi.conj())
    coeffs = pauli_expand(rho)
    for string, value in coeffs.items():
        direct = 0.25 * pauli_trace(rho, [PAULI_MATRICES[k] for k in string])
        assert value == pytest.approx(direct, abs=1e-15)
    assert coeffs[(PauliAxis.X, PauliAxis.Y)] == pytest.approx(-0.25)


def test_pauli_expansion_reconstructs_random_density_matrices(rng):
    for trial in range(100):
        n = 2 + trial % 3
        rho = random_density(rng, n)
        np.testing.assert_allclose(pauli_reconstruct(pauli_expand(rho), n), rho, atol=1e-12, rtol=0)


def test_pauli_trace_matches_kron(rng):
    op = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    factors = [rng.normal(size=(2, 2)) for _ in range(3)]
    expected = np.trace(op @ np.kron(np.kron(factors[0], factors[1]), factors[2]))
    assert pauli_trace(op, factors) == pytest.approx(expected, abs=1e-12)


def test_rotation_gate_closed_forms():
    np.testing.assert_allclose(rotation_gate("Y", np.pi), [[0, -1], [1, 0]], atol=1e-15)
    phase = np.exp(-1j * np.pi / 4)
    np.testing.assert_allclose(rotation_gate("Z", np.pi / 2), np.diag([phase, phase.conj()]), atol=1e-15)
    np.testing.assert_allclose(rotation_gate("X", 0.0), np.eye(2), atol=0)


def test_gate_constructors_are_unitary(rng):
    gates = [HADAMARD, PHASE] + [rotation_gate(axis, angle) for axis in "XYZ" for angle in rng.uniform(-7, 7, 5)]
    for gate in gates:
        np.testing.assert_allclose(gate.conj().T @ gate, np.eye(2), atol=1e-12)
    for axis in "XYZ":
        stack = rotation_gates(PauliAxis.parse(axis), rng.uniform(-7, 7, size=(4, 3)))
        np.testing.assert_allclose(stack.conj().swapaxes(-1, -2) @ stack, np.broadcast_to(np.eye(2), (4, 3, 2, 2)), atol=1e-12)


def test_norm_survives_long_random_circuit(rng):
    state = StateVector.zero(8)
    for _ in range(100):
        if rng.uniform() < 0.3:
            control, target = rng.choice(np.arange(1, 9), size=2, replace=False)
            state = apply_cnot(state, int(control), int(target))
        else:
            gate = rotation_gate(PauliAxis(int(rng.integers(1, 4))), rng.uniform(-np.pi, np.pi))
            state = apply_single_qubit_gate(state, gate, int(rng.integers(1, 9)))
    assert state.norm() == pytest.approx(1.0, abs=1e-12)


def test_gates_on_different_qubits_commute(rng):
    state = random_state(rng, 3)
    a = rotation_gate("X", rng.uniform(-np.pi, np.pi))
    b = rotation_gate("Y", rng.uniform(-np.pi, np.pi)) @ HADAMARD
    ab = apply_single_qubit_gate(apply_single_qubit_gate(state, a, 1), b, 3)
    ba = apply_single_qubit_gate(apply_single_qubit_gate(state, b, 3), a, 1)
    np.testing.assert_allclose(ab.amplitudes, ba.amplitudes, atol=1e-14)


def test_maximally_mixed_qubit_has_zero_expectations(rng):
    rho = DensityMatrix(1, np.eye(2) / 2)
    unitary = rotation_gate("Y", rng.uniform(-np.pi, np.pi))
    for label in "XYZ":
        assert expectation_density(rho, unitary, Observable.from_label(label)) == pytest.approx(0.0, abs=1e-15)
    assert expectation_density(rho, np.eye(2), Observable.dense(PAULI_MATRICES[PauliAxis.Z])) == 0.0


def test_cnot_after_hadamard_makes_bell_state():
    state = apply_cnot(apply_single_qubit_gate(StateVector.zero(2), HADAMARD, 1), 1, 2)
    np.testing.assert_allclose(state.amplitudes, np.array([1, 0, 0, 1]) / np.sqrt(2), atol=1e-15)
    assert expectation(state, Observable.from_label("ZZ")) == pytest.approx(1.0)
    assert expectation(state, Observable.from_label("XX")) == pytest.approx(1.0)
    assert expectation(state, Observable.from_label("ZI")) == pytest.approx(0.0, abs=1e-15)
    projector = np.outer(state.amplitudes, state.amplitudes.conj())
    dense = Observable.dense(projector)
    assert dense.n == 2
    assert expectation(state, dense) == pytest.approx(1.0)
