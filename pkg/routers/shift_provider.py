from typing import Any, ClassVar, Dict, List

import numpy as np

from src.vqc import PARAMETER_SHIFT, CircuitSpec, grad_input_shift
from .base_gradient_provider import BaseGradientProvider


class ShiftGradientProvider(BaseGradientProvider):
    """Input gradients from 2n shifted circuit evaluations"""

    SUPPORTED_PATHS: ClassVar[List[str]] = ["shift"]

    def __init__(self, shift: float = PARAMETER_SHIFT):
        self.shift = shift

    def input_jacobian(self, x: np.ndarray, theta: np.ndarray, circuit: CircuitSpec) -> np.ndarray:
        self._validate_circuit(circuit)
        return grad_input_shift(x, theta, circuit, shift=self.shift)

    @property
    def provider_info(self) -> Dict[str, Any]:
        return {"path": "shift", "shift": self.shift, "evaluations": "2n"}
