"""
Verification harness for the gradient paths.

run_gradcheck compares the analytic input gradient, the parameter-shift
input gradient and central finite differences on random circuits, and sweeps
the bracket identity over every axis pair. model_gradient_errors checks the
full hybrid backward pass against finite differences of the loss.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .errors import GradcheckFailure
from .hybrid import HybridModel, backward, forward, loss
from .quantum_core import PauliAxis, pauli_label
from .vqc import (
    ANALYTIC_MAX_QUBITS,
    PARAMETER_SHIFT,
    AnsatzSpec,
    CircuitSpec,
    EncodingSpec,
    ObservableSet,
    PreGate,
    grad_input_analytic,
    grad_input_shift,
    lie_bracket_check,
    run,
)

logger = logging.getLogger(__name__)

ANALYTIC_VS_SHIFT_ATOL = 1e-10
SHIFT_VS_FD_RTOL = 1e-6
BRACKET_ATOL = 1e-12
FD_STEP = 1e-5
# Jacobians smaller than this are compared absolutely (FD noise is ~1e-11)
FD_FLOOR = 1e-3
BRACKET_ANGLES = 20
ROTATION_AXES = (PauliAxis.X, PauliAxis.Y, PauliAxis.Z)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """||a - b||_2 / max(||b||_2, floor)"""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


def finite_difference(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences; result has shape f(x).shape + x.shape"""
    x = np.asarray(x, dtype=np.float64)
    out_shape = np.shape(f(x))
    jacobian = np.zeros(out_shape + x.shape)
    for index in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[index] += h
        minus[index] -= h
        jacobian[(Ellipsis,) + index] = (np.asarray(f(plus)) - np.asarray(f(minus))) / (2.0 * h)
    return jacobian


def random_circuit(n: int, blocks: int, rng: np.random.Generator, m: int = 2) -> CircuitSpec:
    """Random rotation axes and pre-gates, CNOT ring, m random non-identity Pauli observables"""
    ring = [(q, q % n + 1) for q in range(1, n + 1)] if n > 1 else []
    labels: List[str] = []
    while len(labels) < m:
        string = rng.integers(0, 4, size=n)
        if string.any():
            labels.append(pauli_label(string))
    return CircuitSpec(
        encoding=EncodingSpec(
            n=n,
            axes=[ROTATION_AXES[i] for i in rng.integers(0, 3, size=n)],
            pre_gates=[list(PreGate)[i] for i in rng.integers(0, 3, size=n)],
        ),
        ansatz=AnsatzSpec(
            n=n,
            blocks=blocks,
            axes=[[ROTATION_AXES[i] for i in rng.integers(0, 3, size=n)] for _ in range(blocks)],
            entanglers=[list(ring) for _ in range(blocks)],
        ),
        observables=ObservableSet(labels=labels),
    )


@dataclass
class GradcheckReport:
    qubits: int
    blocks: int
    trials: int
    max_analytic_vs_shift: float = 0.0
    max_shift_vs_fd: float = 0.0
    max_bracket_deviation: float = 0.0
    worst_case: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (
            self.max_analytic_vs_shift <= ANALYTIC_VS_SHIFT_ATOL
            and self.max_shift_vs_fd <= SHIFT_VS_FD_RTOL
            and self.max_bracket_deviation <= BRACKET_ATOL
        )

    def to_dict(self) -> Dict:
        return {**asdict(self), "passed": self.passed}

    def raise_for_failure(self) -> None:
        if not self.passed:
            raise GradcheckFailure(
                f"Gradient check failed: analytic vs shift {self.max_analytic_vs_shift:.3e} "
                f"(tol {ANALYTIC_VS_SHIFT_ATOL}), shift vs FD {self.max_shift_vs_fd:.3e} (tol {SHIFT_VS_FD_RTOL}), "
                f"bracket {self.max_bracket_deviation:.3e} (tol {BRACKET_ATOL})",
                worst_case=self.worst_case,
            )


def bracket_sweep(rng: np.random.Generator, angles: int = BRACKET_ANGLES) -> float:
    """Largest deviation of the bracket identity over 3 x 4 axis pairs, random angles, pre-gates I and H"""
    worst = 0.0
    for k in ROTATION_AXES:
        for i in PauliAxis:
            for angle in rng.uniform(-np.pi, np.pi, size=angles):
                for pre_gate in (PreGate.I, PreGate.H):
                    worst = max(worst, lie_bracket_check(k, i, angle, pre_gate))
    return worst


def run_gradcheck(
    qubits: int = 4, blocks: int = 4, trials: int = 50, seed: int = 42, shift: Optional[float] = None
) -> GradcheckReport:
    """
    Analytic vs shift vs finite differences on `trials` random circuits.

    `shift` replaces the pi/2 shift of the shift path; any other value must
    make the check fail.
    """
    if trials < 1:
        raise ValueError(f"--trials must be at least 1, got {trials}")
    if not 1 <= qubits <= ANALYTIC_MAX_QUBITS:
        raise ValueError(f"--qubits must lie in 1..{ANALYTIC_MAX_QUBITS} for the analytic path, got {qubits}")
    shift = PARAMETER_SHIFT if shift is None else shift
    rng = np.random.default_rng(seed)
    report = GradcheckReport(qubits=qubits, blocks=blocks, trials=trials)
    worst_score = -1.0

    for trial in range(trials):
        circuit = random_circuit(qubits, blocks, rng, m=min(2, qubits))
        x = rng.normal(size=qubits)
        theta = rng.uniform(-np.pi, np.pi, size=(blocks, qubits))

        analytic = grad_input_analytic(x, theta, circuit)
        shifted = grad_input_shift(x, theta, circuit, shift=shift)
        numeric = finite_difference(lambda v: run(v, theta, circuit), x)
        gap = float(np.max(np.abs(analytic - shifted)))
        rel = relative_error(shifted, numeric, floor=FD_FLOOR)
        report.max_analytic_vs_shift = max(report.max_analytic_vs_shift, gap)
        report.max_shift_vs_fd = max(report.max_shift_vs_fd, rel)

        score = max(gap / ANALYTIC_VS_SHIFT_ATOL, rel / SHIFT_VS_FD_RTOL)
        if score > worst_score:
            worst_score = score
            report.worst_case = {
                "trial": trial,
                "x": x.tolist(),
                "theta": theta.tolist(),
                "circuit": circuit.model_dump(mode="json"),
                "analytic_vs_shift": gap,
                "shift_vs_fd": rel,
            }

    report.max_bracket_deviation = bracket_sweep(rng)
    logger.info(
        f"Gradcheck over {trials} circuits: analytic/shift {report.max_analytic_vs_shift:.2e}, "
        f"shift/FD {report.max_shift_vs_fd:.2e}, bracket {report.max_bracket_deviation:.2e}"
    )
    return report


def model_gradient_errors(
    model: HybridModel,
    image: np.ndarray,
    label: int,
    h: float = 1e-4,
    entries: Optional[int] = 20,
    seed: int = 0,
    floor: float = 1e-12,
) -> Dict[str, float]:
    """
    Relative error between backward() and central differences of the loss,
    per parameter block, on up to `entries` randomly chosen entries of each block.
    """
    rng = np.random.default_rng(seed)
    _, cache = forward(model, image)
    grads = backward(model, cache, label)
    errors: Dict[str, float] = {}
    for name, param in model.parameters().items():
        flat = param.reshape(-1)
        chosen = np.arange(flat.size)
        if entries is not None and flat.size > entries:
            chosen = np.sort(rng.choice(flat.size, size=entries, replace=False))
        numeric = np.zeros(chosen.size)
        for slot, index in enumerate(chosen):
            saved = flat[index]
            flat[index] = saved + h
            up = loss(forward(model, image)[0], label)
            flat[index] = saved - h
            down = loss(forward(model, image)[0], label)
            flat[index] = saved
            numeric[slot] = (up - down) / (2.0 * h)
        errors[name] = relative_error(grads[name].reshape(-1)[chosen], numeric, floor=floor)
    logger.debug("Model gradient errors: " + ", ".join(f"{name}={err:.2e}" for name, err in errors.items()))
    return errors
