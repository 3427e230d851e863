"""
The composed classifier: CNN features -> affine projection -> quantum circuit
(arctan-scaled angle encoding) -> linear readout, with softmax cross-entropy
and the full chain-rule backward pass.
"""
import copy
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.special import logsumexp, softmax

from .cnn import ConvCache, ConvNet, ConvNetSpec
from .errors import InvalidClassError, ShapeMismatchError
from .vqc import CircuitSpec, default_circuit, grad_input_shift, grad_params_shift, init_params, run

DEFAULT_SEED = 42
QUANTUM_PARAMETERS = frozenset({"vqc.theta"})


class ModelSpec(BaseModel):
    """Architecture of a hybrid model; stored as JSON inside checkpoints"""
    input_shape: Tuple[int, int, int] = Field(..., description="(channels, height, width) of the input image")
    num_classes: int = Field(..., ge=1)
    cnn: ConvNetSpec
    circuit: CircuitSpec

    @model_validator(mode="after")
    def _check_chain(self):
        if not self.circuit.encoding.input_scaling:
            raise ValueError("Hybrid models encode arctan-scaled projections; enable input_scaling")
        if self.circuit.m != self.num_classes:
            raise ValueError(f"Circuit measures {self.circuit.m} observables for {self.num_classes} classes")
        self.cnn.output_shape(self.input_shape)
        return self

    @property
    def feature_shape(self) -> Tuple[int, int, int]:
        return self.cnn.output_shape(self.input_shape)

    @property
    def feature_size(self) -> int:
        return int(np.prod(self.feature_shape))


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


class HybridModel:
    """CNN, projection, circuit and readout with every parameter trainable"""

    def __init__(
        self,
        spec: ModelSpec,
        cnn: ConvNet,
        projection_weight: np.ndarray,
        projection_bias: np.ndarray,
        theta: np.ndarray,
        readout_weight: np.ndarray,
        readout_bias: np.ndarray,
    ):
        self.spec = spec
        self.cnn = cnn
        self.projection_weight = projection_weight
        self.projection_bias = projection_bias
        self.theta = theta
        self.readout_weight = readout_weight
        self.readout_bias = readout_bias
        self._check_shapes()

    def _check_shapes(self) -> None:
        expected = self.parameter_shapes(self.spec)
        for name, value in self.parameters().items():
            if value.shape != expected[name]:
                raise ShapeMismatchError(f"Parameter {name} has shape {value.shape}, expected {expected[name]}")

    @classmethod
    def initialize(cls, spec: ModelSpec, seed: int = DEFAULT_SEED) -> "HybridModel":
        rng = np.random.default_rng(seed)
        cnn = ConvNet.initialize(spec.cnn, rng)
        n, m = spec.circuit.n, spec.num_classes
        return cls(
            spec=spec,
            cnn=cnn,
            projection_weight=_glorot(rng, n, spec.feature_size),
            projection_bias=np.zeros(n),
            theta=init_params(spec.circuit.ansatz, rng),
            readout_weight=_glorot(rng, m, m),
            readout_bias=np.zeros(m),
        )

    @property
    def circuit(self) -> CircuitSpec:
        return self.spec.circuit

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @staticmethod
    def parameter_shapes(spec: ModelSpec) -> Dict[str, Tuple[int, ...]]:
        shapes: Dict[str, Tuple[int, ...]] = {}
        for i, layer in enumerate(spec.cnn.layers):
            shapes[f"cnn.kernel.{i}"] = (layer.out_channels, layer.in_channels, layer.kernel_size, layer.kernel_size)
        for i, layer in enumerate(spec.cnn.layers):
            shapes[f"cnn.bias.{i}"] = (layer.out_channels,)
        n, m = spec.circuit.n, spec.num_classes
        shapes["projection.weight"] = (n, spec.feature_size)
        shapes["projection.bias"] = (n,)
        shapes["vqc.theta"] = (spec.circuit.blocks, n)
        shapes["readout.weight"] = (m, m)
        shapes["readout.bias"] = (m,)
        return shapes

    def parameters(self) -> Dict[str, np.ndarray]:
        """Live views of every parameter in declared order"""
        params: Dict[str, np.ndarray] = {}
        for i, kernel in enumerate(self.cnn.kernels):
            params[f"cnn.kernel.{i}"] = kernel
        for i, bias in enumerate(self.cnn.biases):
            params[f"cnn.bias.{i}"] = bias
        params["projection.weight"] = self.projection_weight
        params["projection.bias"] = self.projection_bias
        params["vqc.theta"] = self.theta
        params["readout.weight"] = self.readout_weight
        params["readout.bias"] = self.readout_bias
        return params

    @classmethod
    def from_parameters(cls, spec: ModelSpec, params: Dict[str, np.ndarray]) -> "HybridModel":
        layers = len(spec.cnn.layers)
        cnn = ConvNet(
            spec.cnn,
            [params[f"cnn.kernel.{i}"] for i in range(layers)],
            [params[f"cnn.bias.{i}"] for i in range(layers)],
        )
        return cls(
            spec=spec,
            cnn=cnn,
            projection_weight=params["projection.weight"],
            projection_bias=params["projection.bias"],
            theta=params["vqc.theta"],
            readout_weight=params["readout.weight"],
            readout_bias=params["readout.bias"],
        )

    def copy(self) -> "HybridModel":
        return HybridModel.from_parameters(self.spec, copy.deepcopy(self.parameters()))


def build_model(
    input_shape: Tuple[int, int, int],
    num_classes: int,
    qubits: int = 8,
    blocks: int = 4,
    seed: int = DEFAULT_SEED,
    cnn: Optional[ConvNetSpec] = None,
) -> HybridModel:
    spec = ModelSpec(
        input_shape=input_shape,
        num_classes=num_classes,
        cnn=cnn or ConvNetSpec.default(in_channels=input_shape[0]),
        circuit=default_circuit(n=qubits, blocks=blocks, m=num_classes),
    )
    return HybridModel.initialize(spec, seed=seed)


@dataclass
class ForwardCache:
    conv: ConvCache
    activations: np.ndarray
    projected: np.ndarray
    expectations: np.ndarray
    scores: np.ndarray


def _as_input(model: HybridModel, image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None, :, :]
    if image.shape != tuple(model.spec.input_shape):
        raise ShapeMismatchError(f"Model expects input of shape {tuple(model.spec.input_shape)}, got {image.shape}")
    return image


def head_forward(model: HybridModel, activations: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Classifier head on tapped activations: returns (projected, expectations, scores)"""
    projected = model.projection_weight @ activations.ravel() + model.projection_bias
    expectations = run(projected, model.theta, model.circuit)
    scores = model.readout_weight @ expectations + model.readout_bias
    return projected, expectations, scores


def forward(model: HybridModel, image: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    activations, conv_cache = model.cnn.forward(_as_input(model, image))
    projected, expectations, scores = head_forward(model, activations)
    return scores, ForwardCache(conv_cache, activations, projected, expectations, scores)


def check_label(label: int, num_classes: int) -> int:
    if isinstance(label, bool) or not isinstance(label, (int, np.integer)) or not 1 <= label <= num_classes:
        raise InvalidClassError(f"Class label {label!r} out of range 1..{num_classes}")
    return int(label)


def loss(scores: np.ndarray, label: int) -> float:
    """Softmax cross-entropy for a 1-based label"""
    scores = np.asarray(scores, dtype=np.float64)
    label = check_label(label, scores.shape[0])
    return float(logsumexp(scores) - scores[label - 1])


def backward(model: HybridModel, cache: Optional[ForwardCache], label: int) -> Dict[str, np.ndarray]:
    """Gradients of the loss for every parameter, keyed and ordered like parameters()"""
    if cache is None:
        raise ValueError("Backward pass needs the cache returned by forward()")
    label = check_label(label, model.num_classes)
    d_scores = softmax(cache.scores)
    d_scores[label - 1] -= 1.0

    d_expectations = model.readout_weight.T @ d_scores
    theta_jacobian = grad_params_shift(cache.projected, model.theta, model.circuit)
    input_jacobian = grad_input_shift(cache.projected, model.theta, model.circuit)
    d_theta = (d_expectations @ theta_jacobian).reshape(model.theta.shape)
    d_projected = d_expectations @ input_jacobian

    features = cache.activations.ravel()
    d_features = model.projection_weight.T @ d_projected
    conv_grads = model.cnn.backward(cache.conv, d_features.reshape(cache.activations.shape))

    grads: Dict[str, np.ndarray] = {}
    for i, d_kernel in enumerate(conv_grads.kernels):
        grads[f"cnn.kernel.{i}"] = d_kernel
    for i, d_bias in enumerate(conv_grads.biases):
        grads[f"cnn.bias.{i}"] = d_bias
    grads["projection.weight"] = np.outer(d_projected, features)
    grads["projection.bias"] = d_projected
    grads["vqc.theta"] = d_theta
    grads["readout.weight"] = np.outer(d_scores, cache.expectations)
    grads["readout.bias"] = d_scores
    return grads


def predict(model: HybridModel, images: Iterable[np.ndarray]) -> np.ndarray:
    """1-based predicted labels"""
    return np.array([int(np.argmax(forward(model, image)[0])) + 1 for image in images], dtype=np.int64)


def evaluate(model: HybridModel, dataset) -> float:
    """Fraction of correctly classified samples of a Dataset"""
    if len(dataset) == 0:
        raise ValueError("Cannot evaluate on an empty dataset")
    return float(np.mean(predict(model, dataset.images) == dataset.labels))
