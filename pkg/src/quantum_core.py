"""
Dense statevector primitives: Pauli algebra, gate kernels, expectations and
density-matrix utilities.

Qubits are numbered 1..n, big-endian: qubit 1 is the most significant bit of
the basis index. Gate kernels reshape the amplitude vector so the target
qubit becomes its own axis; no 2^n x 2^n Kronecker product is ever built for
gate application.
"""
from dataclasses import dataclass
from enum import IntEnum
from itertools import product
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ShapeMismatchError

ATOL = 1e-12
IMAG_TOL = 1e-10


class PauliAxis(IntEnum):
    I = 0
    X = 1
    Y = 2
    Z = 3

    @classmethod
    def parse(cls, value: Union[str, int, "PauliAxis"]) -> "PauliAxis":
        """Accept 'X', 'y', 1 or PauliAxis.X"""
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"Unknown Pauli axis {value!r}. Supported axes: I, X, Y, Z")
        return cls(int(value))


PAULI_MATRICES = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=np.complex128,
)

HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)
PHASE = np.array([[1, 0], [0, 1j]], dtype=np.complex128)
IDENTITY = np.eye(2, dtype=np.complex128)

# Tuple of per-qubit axes (i_1, ..., i_n)
PauliString = Tuple[PauliAxis, ...]


def pauli_label(string: Sequence[int]) -> str:
    return "".join(PauliAxis(k).name for k in string)


def parse_pauli_string(label: str) -> PauliString:
    return tuple(PauliAxis.parse(ch) for ch in label)


@dataclass(frozen=True)
class StateVector:
    """Pure n-qubit state"""
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Qubit count must be >= 1, got {self.n}")
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2 ** self.n,):
            raise ShapeMismatchError(
                f"Statevector for {self.n} qubits needs {2 ** self.n} amplitudes, got shape {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n: int) -> "StateVector":
        amps = np.zeros(2 ** n, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n, amps)

    @classmethod
    def basis(cls, n: int, bits: str) -> "StateVector":
        """Computational basis state from a big-endian bit string, e.g. '10'"""
        if len(bits) != n:
            raise ShapeMismatchError(f"Bit string {bits!r} does not have {n} bits")
        amps = np.zeros(2 ** n, dtype=np.complex128)
        amps[int(bits, 2)] = 1.0
        return cls(n, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    n: int
    entries: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=np.complex128)
        dim = 2 ** self.n
        if rho.shape != (dim, dim):
            raise ShapeMismatchError(f"Density matrix for {self.n} qubits must be {dim}x{dim}, got {rho.shape}")
        if not np.allclose(rho, rho.conj().T, atol=ATOL, rtol=0.0):
            raise ValueError("Density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > ATOL:
            raise ValueError(f"Density matrix trace is {np.trace(rho)}, expected 1")
        object.__setattr__(self, "entries", rho)


@dataclass(frozen=True)
class Observable:
    """Hermitian observable, either a single Pauli string or a dense matrix"""
    n: int
    pauli: Optional[PauliString] = None
    dense_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.pauli is None) == (self.dense_matrix is None):
            raise ValueError("Observable needs exactly one of a Pauli string or a dense matrix")
        if self.pauli is not None and len(self.pauli) != self.n:
            raise ShapeMismatchError(f"Pauli string {pauli_label(self.pauli)} does not act on {self.n} qubits")
        if self.dense_matrix is not None:
            q = np.asarray(self.dense_matrix, dtype=np.complex128)
            dim = 2 ** self.n
            if q.shape != (dim, dim):
                raise ShapeMismatchError(f"Observable on {self.n} qubits must be {dim}x{dim}, got {q.shape}")
            if not np.allclose(q, q.conj().T, atol=ATOL, rtol=0.0):
                raise ValueError("Observable matrix is not Hermitian")
            object.__setattr__(self, "dense_matrix", q)

    @classmethod
    def from_label(cls, label: str) -> "Observable":
        string = parse_pauli_string(label)
        return cls(len(string), pauli=string)

    @classmethod
    def z(cls, q: int, n: int) -> "Observable":
        _check_qubit(q, n)
        axes = [PauliAxis.I] * n
        axes[q - 1] = PauliAxis.Z
        return cls(n, pauli=tuple(axes))

    @classmethod
    def dense(cls, matrix: np.ndarray) -> "Observable":
        matrix = np.asarray(matrix)
        n = int(round(np.log2(matrix.shape[0])))
        return cls(n, dense_matrix=matrix)

    def matrix(self) -> np.ndarray:
        if self.dense_matrix is not None:
            return self.dense_matrix
        return pauli_matrix(self.pauli)


def _check_qubit(q: int, n: int) -> None:
    if not 1 <= q <= n:
        raise ValueError(f"Qubit index {q} out of range 1..{n}")


def _num_qubits(amps: np.ndarray) -> int:
    dim = amps.shape[-1]
    n = dim.bit_length() - 1
    if dim != 2 ** n or n < 1:
        raise ShapeMismatchError(f"Amplitude axis of length {dim} is not a power of two")
    return n


def rotation_gate(axis: Union[PauliAxis, int, str], angle: float) -> np.ndarray:
    """exp(-i angle sigma_k / 2)"""
    k = PauliAxis.parse(axis)
    if k == PauliAxis.I:
        raise ValueError("Rotation about the identity axis is not a gate; use X, Y or Z")
    half = 0.5 * angle
    return np.cos(half) * IDENTITY - 1j * np.sin(half) * PAULI_MATRICES[k]


def rotation_gates(axis: Union[PauliAxis, int], angles: np.ndarray) -> np.ndarray:
    """Vectorised rotation_gate over an array of angles, shape (..., 2, 2)"""
    k = PauliAxis.parse(axis)
    if k == PauliAxis.I:
        raise ValueError("Rotation about the identity axis is not a gate; use X, Y or Z")
    half = 0.5 * np.asarray(angles, dtype=np.float64)[..., None, None]
    return np.cos(half) * IDENTITY - 1j * np.sin(half) * PAULI_MATRICES[k]


def apply_gate_kernel(amps: np.ndarray, gate: np.ndarray, q: int) -> np.ndarray:
    """
    Apply a 2x2 gate on qubit q to amplitude arrays of shape (..., 2^n).

    `gate` is either a single (2, 2) matrix or a stack (..., 2, 2) broadcasting
    against the leading axes of `amps`, so each batch row may carry its own gate.
    """
    n = _num_qubits(amps)
    _check_qubit(q, n)
    lead = amps.shape[:-1]
    view = amps.reshape(lead + (2 ** (q - 1), 2, 2 ** (n - q)))
    gate = np.asarray(gate, dtype=np.complex128)
    if gate.ndim == 2:
        out = np.einsum("ab,...ibj->...iaj", gate, view)
    else:
        out = np.einsum("...ab,...ibj->...iaj", gate, view)
    return out.reshape(amps.shape)


def apply_cnot_kernel(amps: np.ndarray, control: int, target: int) -> np.ndarray:
    n = _num_qubits(amps)
    _check_qubit(control, n)
    _check_qubit(target, n)
    if control == target:
        raise ValueError(f"CNOT control and target must differ, both are {control}")
    lead = len(amps.shape) - 1
    tensor = amps.reshape(amps.shape[:-1] + (2,) * n).copy()
    index = [slice(None)] * (lead + n)
    index[lead + control - 1] = 1
    index = tuple(index)
    # the control axis is dropped by the integer index
    target_axis = lead + target - 1 - (1 if target > control else 0)
    tensor[index] = np.flip(tensor[index], axis=target_axis).copy()
    return tensor.reshape(amps.shape)


def apply_single_qubit_gate(state: StateVector, gate: np.ndarray, q: int) -> StateVector:
    gate = np.asarray(gate, dtype=np.complex128)
    if gate.shape != (2, 2):
        raise ShapeMismatchError(f"Single-qubit gate must be 2x2, got {gate.shape}")
    _check_qubit(q, state.n)
    if np.array_equal(gate, IDENTITY):
        return StateVector(state.n, state.amplitudes.copy())
    return StateVector(state.n, apply_gate_kernel(state.amplitudes, gate, q))


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    return StateVector(state.n, apply_cnot_kernel(state.amplitudes, control, target))


def apply_pauli_string(amps: np.ndarray, string: Sequence[int]) -> np.ndarray:
    out = amps
    for q, k in enumerate(string, start=1):
        if k != PauliAxis.I:
            out = apply_gate_kernel(out, PAULI_MATRICES[k], q)
    return out


def real_part(values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values)
    residue = np.max(np.abs(values.imag)) if values.size else 0.0
    if residue > IMAG_TOL:
        raise ArithmeticError(f"{what} has imaginary residue {residue:.3e} > {IMAG_TOL}")
    return values.real


def expectations_kernel(amps: np.ndarray, observables: Sequence[Observable]) -> np.ndarray:
    """<psi|Q_i|psi> for amplitude arrays (..., 2^n); returns (..., m)"""
    n = _num_qubits(amps)
    values = []
    for obs in observables:
        if obs.n != n:
            raise ShapeMismatchError(f"Observable acts on {obs.n} qubits, state has {n}")
        if obs.pauli is not None:
            image = apply_pauli_string(amps, obs.pauli)
        else:
            image = amps @ obs.dense_matrix.T
        values.append(np.sum(amps.conj() * image, axis=-1))
    return real_part(np.stack(values, axis=-1), "Expectation value")


def expectation(state: StateVector, obs: Observable) -> float:
    return float(expectations_kernel(state.amplitudes, [obs])[0])


def density_from_state(state: StateVector) -> DensityMatrix:
    psi = state.amplitudes
    return DensityMatrix(state.n, np.outer(psi, psi.conj()))


def expectation_density(rho: DensityMatrix, unitary: np.ndarray, obs: Observable) -> float:
    """tr(Q U rho U^dagger)"""
    dim = 2 ** rho.n
    unitary = np.asarray(unitary, dtype=np.complex128)
    if unitary.shape != (dim, dim) or obs.n != rho.n:
        raise ShapeMismatchError(
            f"Dimension mismatch: rho {rho.entries.shape}, U {unitary.shape}, observable on {obs.n} qubits"
        )
    evolved = unitary @ rho.entries @ unitary.conj().T
    value = np.trace(obs.matrix() @ evolved)
    return float(real_part(value, "Density-matrix expectation"))


def pauli_matrix(string: Sequence[int]) -> np.ndarray:
    out = np.ones((1, 1), dtype=np.complex128)
    for k in string:
        out = np.kron(out, PAULI_MATRICES[k])
    return out


def pauli_trace(ops: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    """
    tr(op . (F_1 (x) ... (x) F_n)) for ops of shape (..., 2^n, 2^n).

    Contracts one qubit at a time: the leading qubit of op is paired with F_1
    and the remaining (n-1)-qubit operator carries on.
    """
    ops = np.asarray(ops, dtype=np.complex128)
    n = len(factors)
    if ops.shape[-1] != 2 ** n or ops.shape[-2] != 2 ** n:
        raise ShapeMismatchError(f"Operator of shape {ops.shape[-2:]} does not act on {n} qubits")
    lead = ops.shape[:-2]
    current = ops
    for r, factor in enumerate(factors):
        rest = 2 ** (n - r - 1)
        view = current.reshape(lead + (2, rest, 2, rest))
        current = np.einsum("...aibj,ba->...ij", view, factor)
    return current.reshape(lead)


def _product_state_axes(rho: np.ndarray, n: int) -> Optional[Tuple[Tuple[PauliAxis, float], ...]]:
    """
    Detect rho = (x)_r (I + s_r sigma_{k_r}) / 2 and return the (k_r, s_r) pairs.
    """
    axes = []
    for r in range(n):
        bloch = []
        for k in (PauliAxis.X, PauliAxis.Y, PauliAxis.Z):
            factors = [IDENTITY] * n
            factors[r] = PAULI_MATRICES[k]
            bloch.append(pauli_trace(rho, factors).real)
        bloch = np.array(bloch)
        nonzero = np.flatnonzero(np.abs(bloch) > ATOL)
        if len(nonzero) != 1 or abs(abs(bloch[nonzero[0]]) - 1.0) > ATOL:
            return None
        axes.append((PauliAxis(nonzero[0] + 1), float(np.sign(bloch[nonzero[0]]))))
    candidate = np.ones((1, 1), dtype=np.complex128)
    for k, sign in axes:
        candidate = np.kron(candidate, 0.5 * (IDENTITY + sign * PAULI_MATRICES[k]))
    if not np.allclose(candidate, rho, atol=ATOL, rtol=0.0):
        return None
    return tuple(axes)


def pauli_expand(rho: Union[DensityMatrix, np.ndarray]) -> Dict[PauliString, complex]:
    """
    Coefficients C with rho = sum_s C_s sigma_{s_1} (x) ... (x) sigma_{s_n}.

    Product states of Pauli eigenprojectors get exact coefficients
    (+-2^-n on the 2^n strings built from I and each factor's axis);
    anything else goes through C_s = 2^-n tr(rho P_s). Strings whose
    coefficient vanishes are omitted, so look up with `.get(s, 0)`.
    """
    entries = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=np.complex128)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ShapeMismatchError(f"Density matrix must be square, got shape {entries.shape}")
    dim = entries.shape[0]
    n = dim.bit_length() - 1
    if dim != 2 ** n or n < 1:
        raise ShapeMismatchError(f"Density matrix size {dim} is not a power of two")

    scale = 2.0 ** -n
    axes = _product_state_axes(entries, n)
    if axes is not None:
        coeffs: Dict[PauliString, complex] = {}
        for pick in product((False, True), repeat=n):
            string = tuple(k if used else PauliAxis.I for (k, _), used in zip(axes, pick))
            sign = float(np.prod([s for (_, s), used in zip(axes, pick) if used]))
            coeffs[string] = complex(scale * sign)
        return coeffs

    coeffs = {}
    for string in product(tuple(PauliAxis), repeat=n):
        value = scale * complex(pauli_trace(entries, [PAULI_MATRICES[k] for k in string]))
        if abs(value) > 1e-15:
            coeffs[tuple(string)] = value
    return coeffs


def pauli_reconstruct(coeffs: Dict[PauliString, complex], n: int) -> np.ndarray:
    out = np.zeros((2 ** n, 2 ** n), dtype=np.complex128)
    for string, value in coeffs.items():
        out += value * pauli_matrix(string)
    return out
