from typing import Any, ClassVar, Dict, List

import numpy as np

from src.vqc import ANALYTIC_MAX_QUBITS, CircuitSpec, grad_input_analytic
from .base_gradient_provider import BaseGradientProvider


class AnalyticGradientProvider(BaseGradientProvider):
    """Input gradients from the Pauli expansion of the initial state and the bracket identity"""

    SUPPORTED_PATHS: ClassVar[List[str]] = ["analytic"]
    MAX_QUBITS: ClassVar[int] = ANALYTIC_MAX_QUBITS

    def input_jacobian(self, x: np.ndarray, theta: np.ndarray, circuit: CircuitSpec) -> np.ndarray:
        self._validate_circuit(circuit)
        return grad_input_analytic(x, theta, circuit)

    @property
    def provider_info(self) -> Dict[str, Any]:
        return {"path": "analytic", "max_qubits": self.MAX_QUBITS, "pauli_strings": "2^n"}
