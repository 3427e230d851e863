import numpy as np
import pytest

from src.cnn import ConvLayerSpec, ConvNetSpec
from src.data import synth_shapes
from src.hybrid import ModelSpec, HybridModel, build_model
from src.quantum_core import PauliAxis
from src.vqc import AnsatzSpec, CircuitSpec, EncodingSpec, ObservableSet, PreGate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model():
    """4 qubits, 2 blocks, 8x8 input, default CNN"""
    return build_model((1, 8, 8), num_classes=2, qubits=4, blocks=2, seed=3)


@pytest.fixture
def shapes_model():
    return build_model((1, 16, 16), num_classes=2, qubits=2, blocks=1, seed=5)


@pytest.fixture
def shapes_data():
    return synth_shapes(12, seed=9, split="train")


@pytest.fixture
def cos_circuit():
    """One qubit, Y rotation straight on |0>, no ansatz, Z readout: <Z> = cos(x)"""
    return CircuitSpec(
        encoding=EncodingSpec(n=1, axes=[PauliAxis.Y], pre_gates=[PreGate.I], input_scaling=False),
        ansatz=AnsatzSpec(n=1, blocks=0, axes=[], entanglers=[]),
        observables=ObservableSet(labels=["Z"]),
    )


@pytest.fixture
def pixel_model():
    """1x1 identity conv, projection picking pixel (0, 1), L=0 circuit, identity readout"""
    circuit = CircuitSpec(
        encoding=EncodingSpec(n=1, axes=[PauliAxis.Y], pre_gates=[PreGate.I], input_scaling=True),
        ansatz=AnsatzSpec(n=1, blocks=0, axes=[], entanglers=[]),
        observables=ObservableSet(labels=["Z"]),
    )
    spec = ModelSpec(
        input_shape=(1, 2, 2),
        num_classes=1,
        cnn=ConvNetSpec(layers=[ConvLayerSpec(in_channels=1, out_channels=1, kernel_size=1)], pool_after=[False]),
        circuit=circuit,
    )
    projection = np.zeros((1, 4))
    projection[0, 1] = 1.0
    return HybridModel.from_parameters(
        spec,
        {
            "cnn.kernel.0": np.ones((1, 1, 1, 1)),
            "cnn.bias.0": np.zeros(1),
            "projection.weight": projection,
            "projection.bias": np.zeros(1),
            "vqc.theta": np.zeros((0, 1)),
            "readout.weight": np.eye(1),
            "readout.bias": np.zeros(1),
        },
    )
