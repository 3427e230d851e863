"""Region statistics for heatmaps: does the heat sit where the evidence is?"""
import logging
from typing import Callable, Optional, Tuple, Union

import numpy as np

from routers.base_gradient_provider import BaseGradientProvider
from .config import GradPath
from .data import Dataset
from .hybrid import HybridModel
from .qgradcam import explain

logger = logging.getLogger(__name__)

RegionFn = Callable[[Dataset, int], np.ndarray]


def mask_contrast(heat: np.ndarray, mask: np.ndarray) -> Tuple[float, float]:
    """(mean heat inside the mask, mean heat outside it)"""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != heat.shape:
        raise ValueError(f"Mask {mask.shape} does not match heatmap {heat.shape}")
    if mask.all() or not mask.any():
        raise ValueError("Mask must split the heatmap into two non-empty regions")
    return float(heat[mask].mean()), float(heat[~mask].mean())


def ink_mask(image: np.ndarray) -> np.ndarray:
    return np.asarray(image) > 0


def band_mask(shape: Tuple[int, int], band: Tuple[int, int]) -> np.ndarray:
    """True on the image columns [start, stop) of a time band"""
    mask = np.zeros(shape, dtype=bool)
    mask[:, int(band[0]):int(band[1])] = True
    return mask


def ink_region(dataset: Dataset, index: int) -> np.ndarray:
    return ink_mask(dataset.images[index])


def background_region(dataset: Dataset, index: int) -> np.ndarray:
    """Everything outside the utterance band of a speech sample"""
    if dataset.bands is None:
        raise ValueError(f"Dataset {dataset.split} carries no utterance bands")
    return ~band_mask(dataset.images.shape[1:], dataset.bands[index])


def heat_focus_rate(
    model: HybridModel,
    dataset: Dataset,
    region_fn: RegionFn,
    count: Optional[int] = None,
    strict: bool = True,
    grad_path: Union[GradPath, str, BaseGradientProvider] = GradPath.SHIFT,
) -> float:
    """
    Fraction of samples whose predicted-class heatmap is hotter inside the
    region than outside it (or at least as hot when strict is False).
    Samples whose region covers the whole image or nothing are skipped.
    """
    count = len(dataset) if count is None else min(count, len(dataset))
    hits, checked = 0, 0
    for index in range(count):
        mask = region_fn(dataset, index)
        if mask.all() or not mask.any():
            continue
        heat = explain(model, dataset.images[index], grad_path=grad_path).heatmap.upsampled
        inside, outside = mask_contrast(heat, mask)
        hits += int(inside > outside if strict else inside >= outside)
        checked += 1
    if checked == 0:
        raise ValueError("No sample had a usable region mask")
    logger.info(f"Heat focus: {hits}/{checked} samples")
    return hits / checked
