"""
Convolutional feature extractor with hand-derived backpropagation.

Tensors are (channels, height, width) float64 arrays. Convolution is
cross-correlation (no kernel flip); kernels are stored as (K, C, S, S).
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, Field, model_validator

from .errors import ShapeMismatchError

DEFAULT_SEED = 42


class ConvLayerSpec(BaseModel):
    in_channels: int = Field(..., ge=1, description="Input channels C")
    out_channels: int = Field(..., ge=1, description="Output channels K")
    kernel_size: int = Field(..., ge=1, description="Square kernel size S")
    stride: int = Field(default=1, ge=1)
    padding: int = Field(default=0, ge=0)

    def output_shape(self, height: int, width: int) -> Tuple[int, int]:
        out_h = (height - self.kernel_size + 2 * self.padding) // self.stride + 1
        out_w = (width - self.kernel_size + 2 * self.padding) // self.stride + 1
        if out_h < 1 or out_w < 1 or height + 2 * self.padding < self.kernel_size:
            raise ShapeMismatchError(
                f"Kernel {self.kernel_size} with padding {self.padding} does not fit a {height}x{width} input"
            )
        return out_h, out_w


class ConvNetSpec(BaseModel):
    """conv -> ReLU (-> maxpool) stages; the last stage's post-ReLU output is the tapped tensor"""
    layers: List[ConvLayerSpec] = Field(..., min_length=1)
    pool_after: List[bool] = Field(..., description="Whether a maxpool follows each stage")
    pool_window: int = Field(default=2, ge=1)

    @model_validator(mode="after")
    def _check_chain(self):
        if len(self.pool_after) != len(self.layers):
            raise ValueError(f"pool_after lists {len(self.pool_after)} flags for {len(self.layers)} layers")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_channels != nxt.in_channels:
                raise ValueError(
                    f"Layer with {prev.out_channels} output channels feeds one expecting {nxt.in_channels}"
                )
        return self

    @classmethod
    def default(cls, in_channels: int = 1) -> "ConvNetSpec":
        return cls(
            layers=[
                ConvLayerSpec(in_channels=in_channels, out_channels=8, kernel_size=3, padding=1),
                ConvLayerSpec(in_channels=8, out_channels=16, kernel_size=3, padding=1),
                ConvLayerSpec(in_channels=16, out_channels=32, kernel_size=3, padding=1),
            ],
            pool_after=[True, True, False],
        )

    def output_shape(self, input_shape: Tuple[int, int, int]) -> Tuple[int, int, int]:
        channels, height, width = input_shape
        if channels != self.layers[0].in_channels:
            raise ShapeMismatchError(f"Network expects {self.layers[0].in_channels} channels, got {channels}")
        for layer, pool in zip(self.layers, self.pool_after):
            height, width = layer.output_shape(height, width)
            if pool:
                height = -(-height // self.pool_window)
                width = -(-width // self.pool_window)
        return self.layers[-1].out_channels, height, width


def _padded(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (padding, padding), (padding, padding)))


def _windows(xp: np.ndarray, layer: ConvLayerSpec) -> np.ndarray:
    """(C, H', W', S, S) view of every receptive field"""
    size = layer.kernel_size
    return sliding_window_view(xp, (size, size), axis=(1, 2))[:, :: layer.stride, :: layer.stride]


def _check_conv(x: np.ndarray, layer: ConvLayerSpec, kernels: np.ndarray, biases: np.ndarray) -> None:
    expected = (layer.out_channels, layer.in_channels, layer.kernel_size, layer.kernel_size)
    if x.ndim != 3 or x.shape[0] != layer.in_channels:
        raise ShapeMismatchError(f"Convolution expects ({layer.in_channels}, H, W) input, got {x.shape}")
    if kernels.shape != expected or biases.shape != (layer.out_channels,):
        raise ShapeMismatchError(
            f"Kernels {kernels.shape} / biases {biases.shape} do not match {expected} / ({layer.out_channels},)"
        )


def conv_forward(x: np.ndarray, layer: ConvLayerSpec, kernels: np.ndarray, biases: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    _check_conv(x, layer, kernels, biases)
    layer.output_shape(x.shape[1], x.shape[2])
    windows = _windows(_padded(x, layer.padding), layer)
    return np.einsum("chwuv,kcuv->khw", windows, kernels, optimize=True) + biases[:, None, None]


def conv_backward(
    grad: np.ndarray, x: np.ndarray, layer: ConvLayerSpec, kernels: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (d input, d kernels, d biases)"""
    xp = _padded(x, layer.padding)
    windows = _windows(xp, layer)
    d_kernels = np.einsum("chwuv,khw->kcuv", windows, grad, optimize=True)
    d_biases = grad.sum(axis=(1, 2))

    d_xp = np.zeros_like(xp)
    out_h, out_w = grad.shape[1:]
    s = layer.stride
    for u in range(layer.kernel_size):
        for v in range(layer.kernel_size):
            d_xp[:, u: u + s * (out_h - 1) + 1: s, v: v + s * (out_w - 1) + 1: s] += np.einsum(
                "kc,khw->chw", kernels[:, :, u, v], grad
            )
    p = layer.padding
    d_x = d_xp[:, p: p + x.shape[1], p: p + x.shape[2]]
    return d_x, d_kernels, d_biases


def relu_forward(t: np.ndarray) -> np.ndarray:
    return np.maximum(t, 0.0)


def relu_backward(grad: np.ndarray, pre_activation: np.ndarray) -> np.ndarray:
    # subgradient 0 at exactly 0
    return grad * (pre_activation > 0)


@dataclass
class PoolCache:
    input_shape: Tuple[int, int, int]
    padded_shape: Tuple[int, int, int]
    window: int
    argmax: np.ndarray


def maxpool_forward(t: np.ndarray, window: int = 2) -> Tuple[np.ndarray, PoolCache]:
    """
    Non-overlapping max pooling. Inputs whose sides are not multiples of the
    window are padded by replicating the last row/column. Ties resolve to the
    first position in row-major order within the window.
    """
    channels, height, width = t.shape
    pad_h, pad_w = (-height) % window, (-width) % window
    padded = np.pad(t, ((0, 0), (0, pad_h), (0, pad_w)), mode="edge") if pad_h or pad_w else t
    out_h, out_w = padded.shape[1] // window, padded.shape[2] // window
    blocks = (
        padded.reshape(channels, out_h, window, out_w, window)
        .transpose(0, 1, 3, 2, 4)
        .reshape(channels, out_h, out_w, window * window)
    )
    argmax = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]
    return out, PoolCache(t.shape, padded.shape, window, argmax)


def maxpool_backward(grad: np.ndarray, cache: PoolCache) -> np.ndarray:
    channels, out_h, out_w = grad.shape
    w = cache.window
    blocks = np.zeros((channels, out_h, out_w, w * w))
    np.put_along_axis(blocks, cache.argmax[..., None], grad[..., None], axis=-1)
    padded = blocks.reshape(channels, out_h, out_w, w, w).transpose(0, 1, 3, 2, 4).reshape(cache.padded_shape)

    _, height, width = cache.input_shape
    # replicated cells are copies of the last row/column
    if padded.shape[1] > height:
        padded[:, height - 1, :] += padded[:, height:, :].sum(axis=1)
    padded = padded[:, :height, :]
    if padded.shape[2] > width:
        padded[:, :, width - 1] += padded[:, :, width:].sum(axis=2)
    return np.ascontiguousarray(padded[:, :, :width])


@dataclass
class StageCache:
    input: np.ndarray
    pre_activation: np.ndarray
    pool: Optional[PoolCache] = None


@dataclass
class ConvCache:
    stages: List[StageCache] = field(default_factory=list)


@dataclass
class ConvGradients:
    kernels: List[np.ndarray]
    biases: List[np.ndarray]
    input: np.ndarray


class ConvNet:
    """Ordered conv -> ReLU -> maxpool stages with trainable kernels and biases"""

    def __init__(self, spec: ConvNetSpec, kernels: List[np.ndarray], biases: List[np.ndarray]):
        self.spec = spec
        self.kernels = [np.asarray(k, dtype=np.float64) for k in kernels]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for layer, k, b in zip(spec.layers, self.kernels, self.biases):
            expected = (layer.out_channels, layer.in_channels, layer.kernel_size, layer.kernel_size)
            if k.shape != expected or b.shape != (layer.out_channels,):
                raise ShapeMismatchError(f"Layer weights {k.shape}/{b.shape} do not match {expected}")

    @classmethod
    def initialize(cls, spec: Optional[ConvNetSpec] = None, rng: Optional[np.random.Generator] = None) -> "ConvNet":
        """Glorot-uniform kernels, zero biases"""
        spec = spec or ConvNetSpec.default()
        rng = rng if rng is not None else np.random.default_rng(DEFAULT_SEED)
        kernels, biases = [], []
        for layer in spec.layers:
            area = layer.kernel_size * layer.kernel_size
            bound = np.sqrt(6.0 / (layer.in_channels * area + layer.out_channels * area))
            shape = (layer.out_channels, layer.in_channels, layer.kernel_size, layer.kernel_size)
            kernels.append(rng.uniform(-bound, bound, size=shape))
            biases.append(np.zeros(layer.out_channels))
        return cls(spec, kernels, biases)

    def forward(self, image: np.ndarray) -> Tuple[np.ndarray, ConvCache]:
        x = np.asarray(image, dtype=np.float64)
        if x.ndim == 2:
            x = x[None, :, :]
        cache = ConvCache()
        for layer, kernels, biases, pool in zip(self.spec.layers, self.kernels, self.biases, self.spec.pool_after):
            pre = conv_forward(x, layer, kernels, biases)
            stage = StageCache(input=x, pre_activation=pre)
            x = relu_forward(pre)
            if pool:
                x, stage.pool = maxpool_forward(x, self.spec.pool_window)
            cache.stages.append(stage)
        return x, cache

    def backward(self, cache: Optional[ConvCache], upstream: np.ndarray) -> ConvGradients:
        if cache is None or len(cache.stages) != len(self.spec.layers):
            raise ValueError("Backward pass needs the cache returned by forward()")
        grad = np.asarray(upstream, dtype=np.float64)
        d_kernels: List[np.ndarray] = [np.empty(0)] * len(self.kernels)
        d_biases: List[np.ndarray] = [np.empty(0)] * len(self.biases)
        for index in reversed(range(len(self.spec.layers))):
            stage = cache.stages[index]
            if stage.pool is not None:
                grad = maxpool_backward(grad, stage.pool)
            grad = relu_backward(grad, stage.pre_activation)
            grad, d_kernels[index], d_biases[index] = conv_backward(
                grad, stage.input, self.spec.layers[index], self.kernels[index]
            )
        return ConvGradients(kernels=d_kernels, biases=d_biases, input=grad)
