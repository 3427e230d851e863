"""
Grad-CAM through the quantum classifier head.

The class score is the pre-softmax readout output. Its gradient with
respect to the tapped activations A (post-ReLU output of the last conv stage)
runs back through readout row l, the circuit's input Jacobian (shift or
analytic path), the arctan scaling and the projection. Channel weights are
spatial means of that gradient; the heatmap is ReLU of the weighted channel sum.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from routers.base_gradient_provider import BaseGradientProvider
from .config import GradPath, get_gradient_provider
from .errors import ShapeMismatchError
from .hybrid import HybridModel, check_label, forward
from .imaging import apply_colormap, bilinear_resize, save_pgm, save_png

logger = logging.getLogger(__name__)

OVERLAY_ALPHA = 0.5


@dataclass
class ActivationGradient:
    values: np.ndarray  # (K, H, W)
    class_label: int


@dataclass
class ChannelWeights:
    weights: np.ndarray  # (K,)
    class_label: int


@dataclass
class Heatmap:
    raw: np.ndarray
    normalized: np.ndarray
    upsampled: Optional[np.ndarray] = None


@dataclass
class Explanation:
    predicted: int
    scores: np.ndarray
    class_label: int
    activations: np.ndarray
    gradient: ActivationGradient
    weights: ChannelWeights
    heatmap: Heatmap

    def summary(self) -> dict:
        return {
            "predicted": self.predicted,
            "scores": [float(s) for s in self.scores],
            "class": self.class_label,
            "weights": [float(w) for w in self.weights.weights],
            "heat_max": float(self.heatmap.raw.max()),
        }


def _provider(grad_path: Union[GradPath, str, BaseGradientProvider]) -> BaseGradientProvider:
    if isinstance(grad_path, BaseGradientProvider):
        return grad_path
    return get_gradient_provider(grad_path)


def head_activation_gradient(
    model: HybridModel,
    activations: np.ndarray,
    class_label: int,
    grad_path: Union[GradPath, str, BaseGradientProvider] = GradPath.SHIFT,
) -> ActivationGradient:
    """Gradient of the class score with respect to already-computed activations"""
    class_label = check_label(class_label, model.num_classes)
    activations = np.asarray(activations, dtype=np.float64)
    if activations.shape != tuple(model.spec.feature_shape):
        raise ShapeMismatchError(f"Activations of shape {activations.shape}, expected {model.spec.feature_shape}")
    projected = model.projection_weight @ activations.ravel() + model.projection_bias
    jacobian = _provider(grad_path).input_jacobian(projected, model.theta, model.circuit)
    d_projected = model.readout_weight[class_label - 1] @ jacobian
    values = (model.projection_weight.T @ d_projected).reshape(activations.shape)
    return ActivationGradient(values=values, class_label=class_label)


def activation_gradient(
    model: HybridModel,
    image: np.ndarray,
    class_label: int,
    grad_path: Union[GradPath, str, BaseGradientProvider] = GradPath.SHIFT,
) -> ActivationGradient:
    class_label = check_label(class_label, model.num_classes)
    _, cache = forward(model, image)
    return head_activation_gradient(model, cache.activations, class_label, grad_path)


def channel_weights(gradient: ActivationGradient) -> ChannelWeights:
    return ChannelWeights(weights=gradient.values.mean(axis=(1, 2)), class_label=gradient.class_label)


def normalize_map(raw: np.ndarray) -> np.ndarray:
    """Divide by the maximum; an all-zero map stays zero"""
    peak = float(np.max(raw)) if raw.size else 0.0
    if peak <= 0.0:
        logger.warning("Heatmap is identically zero; leaving it unnormalized")
        return np.zeros_like(raw, dtype=np.float64)
    return raw / peak


def heatmap(activations: np.ndarray, weights: ChannelWeights) -> Heatmap:
    activations = np.asarray(activations, dtype=np.float64)
    w = np.asarray(weights.weights, dtype=np.float64)
    if activations.ndim != 3 or activations.shape[0] != w.shape[0]:
        raise ShapeMismatchError(f"{w.shape[0]} channel weights for activations of shape {activations.shape}")
    raw = np.maximum(0.0, np.tensordot(w, activations, axes=1))
    return Heatmap(raw=raw, normalized=normalize_map(raw))


def upsample_bilinear(h: Heatmap, shape: Tuple[int, int]) -> Heatmap:
    """Corner-aligned bilinear upsampling of the normalized map, renormalized at the target size"""
    height, width = shape
    if height < 1 or width < 1:
        raise ValueError(f"Degenerate upsampling target {shape}")
    if height < h.normalized.shape[0] or width < h.normalized.shape[1]:
        raise ValueError(f"Upsampling target {shape} is smaller than the {h.normalized.shape} heatmap")
    upsampled = bilinear_resize(h.normalized, (height, width))
    if np.any(upsampled > 0):
        upsampled = normalize_map(upsampled)
    return Heatmap(raw=h.raw, normalized=h.normalized, upsampled=upsampled)


def explain(
    model: HybridModel,
    image: np.ndarray,
    class_label: Optional[int] = None,
    grad_path: Union[GradPath, str, BaseGradientProvider] = GradPath.SHIFT,
) -> Explanation:
    """Heatmap for `class_label`, or for the predicted class when None"""
    scores, cache = forward(model, image)
    predicted = int(np.argmax(scores)) + 1
    target = predicted if class_label is None else check_label(class_label, model.num_classes)
    gradient = head_activation_gradient(model, cache.activations, target, grad_path)
    weights = channel_weights(gradient)
    h = heatmap(cache.activations, weights)
    _, height, width = model.spec.input_shape
    h = upsample_bilinear(h, (height, width))
    logger.debug(f"Explained class {target} (predicted {predicted}), raw heat max {h.raw.max():.3g}")
    return Explanation(
        predicted=predicted,
        scores=scores,
        class_label=target,
        activations=cache.activations,
        gradient=gradient,
        weights=weights,
        heatmap=h,
    )


def overlay_image(image: np.ndarray, heat: np.ndarray) -> np.ndarray:
    """Heat colormap blended at 50% alpha over the grayscale input, as uint8 RGB"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        image = image[0]
    if image.shape != heat.shape:
        raise ShapeMismatchError(f"Heatmap {heat.shape} does not match image {image.shape}")
    base = np.repeat(np.clip(image, 0.0, 1.0)[:, :, None] * 255.0, 3, axis=2)
    blended = (1.0 - OVERLAY_ALPHA) * base + OVERLAY_ALPHA * apply_colormap(heat).astype(np.float64)
    return np.rint(blended).astype(np.uint8)


def export_overlay(
    image: np.ndarray, heat: np.ndarray, out_dir: Union[str, Path], stem: str, class_label: int
) -> Tuple[Path, Path]:
    """Write `<stem>.class<l>.heatmap.pgm` and `<stem>.class<l>.overlay.png`"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pgm_path = out_dir / f"{stem}.class{class_label}.heatmap.pgm"
    png_path = out_dir / f"{stem}.class{class_label}.overlay.png"
    save_pgm(heat, pgm_path)
    save_png(overlay_image(image, heat), png_path)
    logger.info(f"Wrote {pgm_path.name} and {png_path.name} to {out_dir}")
    return pgm_path, png_path
