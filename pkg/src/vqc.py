"""
Variational quantum classifier: angle encoding, layered ansatz, Pauli
measurements and the three input-gradient paths (parameter shift, the
Pauli-expansion formula, and the bracket identity it relies on).
"""
import logging
from enum import Enum
from typing import Callable, List, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import ShapeMismatchError
from .quantum_core import (
    HADAMARD,
    IDENTITY,
    PAULI_MATRICES,
    PHASE,
    Observable,
    PauliAxis,
    StateVector,
    apply_cnot_kernel,
    apply_gate_kernel,
    density_from_state,
    expectations_kernel,
    parse_pauli_string,
    pauli_expand,
    pauli_trace,
    real_part,
    rotation_gate,
    rotation_gates,
)

logger = logging.getLogger(__name__)

PARAMETER_SHIFT = np.pi / 2
ANALYTIC_MAX_QUBITS = 8

# theta, shape (L, n), indexed (block, qubit)
VqcParams = np.ndarray


class PreGate(str, Enum):
    I = "I"
    H = "H"
    S = "S"


PRE_GATE_MATRICES = {
    PreGate.I: IDENTITY,
    PreGate.H: HADAMARD,
    PreGate.S: PHASE,
}


def _parse_axis(value):
    if isinstance(value, (str, int)):
        return PauliAxis.parse(value)
    return value


class EncodingSpec(BaseModel):
    n: int = Field(..., ge=1, le=12, description="Number of qubits")
    axes: List[PauliAxis] = Field(..., description="Rotation axis k_q per qubit")
    pre_gates: List[PreGate] = Field(..., description="Fixed gate H_q applied before the rotation")
    input_scaling: bool = Field(default=True, description="Map raw features through arctan before encoding")

    @field_validator("axes", mode="before")
    @classmethod
    def _coerce_axes(cls, value):
        return [_parse_axis(v) for v in value]

    @model_validator(mode="after")
    def _check_lengths(self):
        if len(self.axes) != self.n or len(self.pre_gates) != self.n:
            raise ValueError(
                f"Encoding needs {self.n} axes and pre-gates, got {len(self.axes)} and {len(self.pre_gates)}"
            )
        return self


class AnsatzSpec(BaseModel):
    n: int = Field(..., ge=1, le=12)
    blocks: int = Field(..., ge=0, description="Number of repeated blocks L")
    axes: List[List[PauliAxis]] = Field(..., description="Rotation axis per block per qubit")
    entanglers: List[List[Tuple[int, int]]] = Field(..., description="Ordered CNOT (control, target) pairs per block")

    @field_validator("axes", mode="before")
    @classmethod
    def _coerce_axes(cls, value):
        return [[_parse_axis(v) for v in block] for block in value]

    @model_validator(mode="after")
    def _check_structure(self):
        if len(self.axes) != self.blocks or len(self.entanglers) != self.blocks:
            raise ValueError(f"Ansatz with {self.blocks} blocks needs that many axis rows and entangler lists")
        for ell, row in enumerate(self.axes):
            if len(row) != self.n:
                raise ValueError(f"Block {ell + 1} lists {len(row)} axes for {self.n} qubits")
        for ell, pairs in enumerate(self.entanglers):
            for control, target in pairs:
                if not (1 <= control <= self.n and 1 <= target <= self.n) or control == target:
                    raise ValueError(f"Invalid CNOT pair ({control}, {target}) in block {ell + 1}")
        return self

    @property
    def num_params(self) -> int:
        return self.n * self.blocks


class ObservableSet(BaseModel):
    labels: List[str] = Field(..., min_length=1, description="Pauli-string observables, e.g. 'ZIII'")

    def observables(self) -> List[Observable]:
        return [Observable.from_label(label) for label in self.labels]

    @classmethod
    def single_z(cls, m: int, n: int) -> "ObservableSet":
        if m > n:
            raise ValueError(f"Single-qubit Z observables need m <= n, got m={m}, n={n}")
        return cls(labels=["I" * q + "Z" + "I" * (n - q - 1) for q in range(m)])


class CircuitSpec(BaseModel):
    encoding: EncodingSpec
    ansatz: AnsatzSpec
    observables: ObservableSet

    @model_validator(mode="after")
    def _check_qubits(self):
        if self.encoding.n != self.ansatz.n:
            raise ValueError(f"Encoding acts on {self.encoding.n} qubits, ansatz on {self.ansatz.n}")
        for label in self.observables.labels:
            if len(parse_pauli_string(label)) != self.n:
                raise ValueError(f"Observable {label} does not act on {self.n} qubits")
        return self

    @property
    def n(self) -> int:
        return self.encoding.n

    @property
    def m(self) -> int:
        return len(self.observables.labels)

    @property
    def blocks(self) -> int:
        return self.ansatz.blocks


def default_circuit(n: int = 8, blocks: int = 4, m: int = 2, input_scaling: bool = True) -> CircuitSpec:
    """Y-axis encoding after Hadamards, Y-rotation blocks with a CNOT ring, Z_1..Z_m readout"""
    ring = [(q, q % n + 1) for q in range(1, n + 1)] if n > 1 else []
    return CircuitSpec(
        encoding=EncodingSpec(n=n, axes=[PauliAxis.Y] * n, pre_gates=[PreGate.H] * n, input_scaling=input_scaling),
        ansatz=AnsatzSpec(n=n, blocks=blocks, axes=[[PauliAxis.Y] * n for _ in range(blocks)],
                          entanglers=[list(ring) for _ in range(blocks)]),
        observables=ObservableSet.single_z(m, n),
    )


def init_params(spec: AnsatzSpec, rng: np.random.Generator, scale: float = np.pi / 10) -> VqcParams:
    return rng.uniform(-scale, scale, size=(spec.blocks, spec.n))


def _pre_gate_matrix(pre_gate: Union[PreGate, str, np.ndarray, None]) -> np.ndarray:
    if pre_gate is None:
        return IDENTITY
    if isinstance(pre_gate, np.ndarray):
        return pre_gate.astype(np.complex128)
    return PRE_GATE_MATRICES[PreGate(pre_gate)]


def _check_params(theta: np.ndarray, spec: AnsatzSpec) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[-2:] != (spec.blocks, spec.n) and not (spec.blocks == 0 and theta.size == 0):
        raise ShapeMismatchError(
            f"Ansatz with {spec.blocks} blocks on {spec.n} qubits needs theta of shape "
            f"({spec.blocks}, {spec.n}), got {theta.shape}"
        )
    return theta


def encoding_angles(x: np.ndarray, spec: EncodingSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != spec.n:
        raise ShapeMismatchError(f"Encoding expects {spec.n} features, got {x.shape[-1]}")
    return np.arctan(x) if spec.input_scaling else x


def _encode_angles(angles: np.ndarray, spec: EncodingSpec) -> np.ndarray:
    """Product state (x)_q R_{k_q}(angle_q) H_q |0>, for angles of shape (B, n)"""
    batch = angles.shape[0]
    amps = np.ones((batch, 1), dtype=np.complex128)
    for q in range(spec.n):
        start = PRE_GATE_MATRICES[spec.pre_gates[q]][:, 0]
        if spec.axes[q] == PauliAxis.I:
            local = np.broadcast_to(start, (batch, 2))
        else:
            local = rotation_gates(spec.axes[q], angles[:, q]) @ start
        amps = (amps[:, :, None] * local[:, None, :]).reshape(batch, -1)
    return amps


def encode(x: np.ndarray, spec: EncodingSpec) -> StateVector:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.n,):
        raise ShapeMismatchError(f"Encoding expects a vector of {spec.n} features, got shape {x.shape}")
    angles = encoding_angles(x, spec)
    return StateVector(spec.n, _encode_angles(angles[None, :], spec)[0])


def _apply_ansatz(amps: np.ndarray, spec: AnsatzSpec, theta: np.ndarray) -> np.ndarray:
    """theta is (L, n) shared by every row, or (B, L, n) per row"""
    for ell in range(spec.blocks):
        for control, target in spec.entanglers[ell]:
            amps = apply_cnot_kernel(amps, control, target)
        for q in range(1, spec.n + 1):
            axis = spec.axes[ell][q - 1]
            if axis == PauliAxis.I:
                continue
            amps = apply_gate_kernel(amps, rotation_gates(axis, theta[..., ell, q - 1]), q)
    return amps


def ansatz_unitary(spec: AnsatzSpec, theta: VqcParams) -> Callable[[StateVector], StateVector]:
    theta = _check_params(theta, spec)

    def action(state: StateVector) -> StateVector:
        if state.n != spec.n:
            raise ShapeMismatchError(f"Ansatz acts on {spec.n} qubits, state has {state.n}")
        return StateVector(state.n, _apply_ansatz(state.amplitudes[None, :], spec, theta)[0])

    return action


def ansatz_matrix(spec: AnsatzSpec, theta: VqcParams) -> np.ndarray:
    theta = _check_params(theta, spec)
    columns = _apply_ansatz(np.eye(2 ** spec.n, dtype=np.complex128), spec, theta)
    return columns.T


def _measure(amps: np.ndarray, circuit: CircuitSpec) -> np.ndarray:
    return expectations_kernel(amps, circuit.observables.observables())


def run_batch(x: np.ndarray, theta: np.ndarray, circuit: CircuitSpec) -> np.ndarray:
    """Expectations for a batch of raw inputs (B, n); theta (L, n) or (B, L, n)"""
    theta = _check_params(theta, circuit.ansatz)
    angles = encoding_angles(np.atleast_2d(x), circuit.encoding)
    return _run_angles(angles, theta, circuit)


def _run_angles(angles: np.ndarray, theta: np.ndarray, circuit: CircuitSpec) -> np.ndarray:
    amps = _encode_angles(angles, circuit.encoding)
    if theta.ndim == 3 and amps.shape[0] != theta.shape[0]:
        amps = np.repeat(amps, theta.shape[0], axis=0)
    return _measure(_apply_ansatz(amps, circuit.ansatz, theta), circuit)


def run(x: np.ndarray, theta: VqcParams, circuit: CircuitSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (circuit.n,):
        raise ShapeMismatchError(f"Circuit expects {circuit.n} inputs, got shape {x.shape}")
    return run_batch(x[None, :], theta, circuit)[0]


def _scaling_factor(x: np.ndarray, spec: EncodingSpec) -> np.ndarray:
    return 1.0 / (1.0 + x ** 2) if spec.input_scaling else np.ones_like(x)


def grad_input_shift(
    x: np.ndarray, theta: VqcParams, circuit: CircuitSpec, shift: float = PARAMETER_SHIFT
) -> np.ndarray:
    """
    Jacobian d<Q_i>/dx_q (m x n) from 2n shifted evaluations run as one batch.

    Columns for identity encoding axes are zero. With arctan scaling the
    angle derivative is multiplied by 1 / (1 + x_q^2).
    """
    x = np.asarray(x, dtype=np.float64)
    theta = _check_params(theta, circuit.ansatz)
    angles = encoding_angles(x, circuit.encoding)
    active = [q for q in range(circuit.n) if circuit.encoding.axes[q] != PauliAxis.I]
    jacobian = np.zeros((circuit.m, circuit.n))
    if not active:
        return jacobian
    shifted = np.repeat(angles[None, :], 2 * len(active), axis=0)
    for row, q in enumerate(active):
        shifted[2 * row, q] += shift
        shifted[2 * row + 1, q] -= shift
    values = _run_angles(shifted, theta, circuit)
    for row, q in enumerate(active):
        jacobian[:, q] = 0.5 * (values[2 * row] - values[2 * row + 1])
    return jacobian * _scaling_factor(x, circuit.encoding)[None, :]


def grad_params_shift(
    x: np.ndarray, theta: VqcParams, circuit: CircuitSpec, shift: float = PARAMETER_SHIFT
) -> np.ndarray:
    """Jacobian d<Q_i>/d theta (m x nL), columns in (block, qubit) row-major order"""
    x = np.asarray(x, dtype=np.float64)
    theta = _check_params(theta, circuit.ansatz)
    spec = circuit.ansatz
    jacobian = np.zeros((circuit.m, spec.num_params))
    active = [(ell, q) for ell in range(spec.blocks) for q in range(spec.n) if spec.axes[ell][q] != PauliAxis.I]
    if not active:
        return jacobian
    thetas = np.repeat(theta[None, :, :], 2 * len(active), axis=0)
    for row, (ell, q) in enumerate(active):
        thetas[2 * row, ell, q] += shift
        thetas[2 * row + 1, ell, q] -= shift
    angles = encoding_angles(x, circuit.encoding)[None, :]
    values = _run_angles(angles, thetas, circuit)
    for row, (ell, q) in enumerate(active):
        jacobian[:, ell * spec.n + q] = 0.5 * (values[2 * row] - values[2 * row + 1])
    return jacobian


def _encoding_factor(axis: PauliAxis, angle: float, pre_gate: np.ndarray) -> np.ndarray:
    if axis == PauliAxis.I:
        return pre_gate
    return rotation_gate(axis, angle) @ pre_gate


def _conjugate(v: np.ndarray, op: np.ndarray) -> np.ndarray:
    return v @ op @ v.conj().T


def shifted_bracket(
    k: Union[PauliAxis, int, str], i: Union[PauliAxis, int, str], angle: float, pre_gate=PreGate.H
) -> np.ndarray:
    """i (V(x + pi/2) s_i V(x + pi/2)^+ - V(x - pi/2) s_i V(x - pi/2)^+), with V(x) = R_k(x) H"""
    k = PauliAxis.parse(k)
    sigma = PAULI_MATRICES[PauliAxis.parse(i)]
    pre = _pre_gate_matrix(pre_gate)
    plus = _conjugate(rotation_gate(k, angle + np.pi / 2) @ pre, sigma)
    minus = _conjugate(rotation_gate(k, angle - np.pi / 2) @ pre, sigma)
    return 1j * (plus - minus)


def lie_bracket_check(
    k: Union[PauliAxis, int, str], i: Union[PauliAxis, int, str], angle: float, pre_gate=PreGate.H
) -> float:
    """Max entrywise gap between [s_k, V s_i V^+] and its shifted-conjugation form"""
    k = PauliAxis.parse(k)
    sigma_k = PAULI_MATRICES[k]
    inner = _conjugate(rotation_gate(k, angle) @ _pre_gate_matrix(pre_gate), PAULI_MATRICES[PauliAxis.parse(i)])
    direct = sigma_k @ inner - inner @ sigma_k
    return float(np.max(np.abs(direct - shifted_bracket(k, i, angle, pre_gate))))


def grad_input_analytic(x: np.ndarray, theta: VqcParams, circuit: CircuitSpec) -> np.ndarray:
    """
    Jacobian d<Q_i>/dx_q from the Pauli expansion of rho_0 = |0..0><0..0|.

    Every string s with coefficient C_s contributes
        -i/2 C_s tr( U^+ Q U . (V_1 s_1 V_1^+) (x) ... [s_{k_q}, V_q s_q V_q^+] ... (x) (V_n s_n V_n^+) )
    with the bracket evaluated through the shifted conjugations.
    """
    n = circuit.n
    if n > ANALYTIC_MAX_QUBITS:
        raise ValueError(f"Analytic gradient is limited to {ANALYTIC_MAX_QUBITS} qubits, circuit has {n}")
    x = np.asarray(x, dtype=np.float64)
    theta = _check_params(theta, circuit.ansatz)
    angles = encoding_angles(x, circuit.encoding)
    encoding = circuit.encoding

    coefficients = pauli_expand(density_from_state(StateVector.zero(n)))
    logger.debug(f"Analytic input gradient over {len(coefficients)} Pauli strings, {n} qubits")
    unitary = ansatz_matrix(circuit.ansatz, theta)
    heisenberg = np.stack([unitary.conj().T @ obs.matrix() @ unitary for obs in circuit.observables.observables()])

    pre = [PRE_GATE_MATRICES[g] for g in encoding.pre_gates]
    local = [_encoding_factor(encoding.axes[r], angles[r], pre[r]) for r in range(n)]
    active = [q for q in range(n) if encoding.axes[q] != PauliAxis.I]

    jacobian = np.zeros((circuit.m, n), dtype=np.complex128)
    for string, coefficient in coefficients.items():
        conjugated = [_conjugate(local[r], PAULI_MATRICES[string[r]]) for r in range(n)]
        for q in active:
            factors = list(conjugated)
            factors[q] = -0.5j * shifted_bracket(encoding.axes[q], string[q], angles[q], pre[q])
            jacobian[:, q] += coefficient * pauli_trace(heisenberg, factors)
    jacobian = real_part(jacobian, "Analytic input gradient")
    return jacobian * _scaling_factor(x, encoding)[None, :]
