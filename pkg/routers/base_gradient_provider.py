from abc import ABC, abstractmethod
from typing import Any, ClassVar, Dict, List

import numpy as np

from src.vqc import CircuitSpec


class BaseGradientProvider(ABC):
    """Abstract base class for input-gradient providers of the quantum classifier"""

    SUPPORTED_PATHS: ClassVar[List[str]] = []
    MAX_QUBITS: ClassVar[int] = 12

    @abstractmethod
    def input_jacobian(self, x: np.ndarray, theta: np.ndarray, circuit: CircuitSpec) -> np.ndarray:
        """d<Q_i>/dx_q as an (m, n) matrix, with respect to the raw (pre-arctan) inputs"""
        pass

    @classmethod
    def list_supported_paths(cls) -> List[str]:
        return cls.SUPPORTED_PATHS

    @property
    @abstractmethod
    def provider_info(self) -> Dict[str, Any]:
        pass

    def _validate_circuit(self, circuit: CircuitSpec) -> None:
        if circuit.n > self.MAX_QUBITS:
            raise ValueError(
                f"{type(self).__name__} supports at most {self.MAX_QUBITS} qubits, circuit has {circuit.n}"
            )
