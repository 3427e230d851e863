"""Raster helpers shared by the data pipeline and the heatmap exporter."""
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DatasetFormatError, ShapeMismatchError

# position, (r, g, b)
HEAT_STOPS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
HEAT_COLORS = np.array(
    [
        [0, 0, 0],
        [128, 0, 0],
        [255, 0, 0],
        [255, 255, 0],
        [255, 255, 255],
    ],
    dtype=np.float64,
)


def _corner_aligned(source: int, target: int) -> np.ndarray:
    """Sample positions mapping the first and last target cells onto the first and last source cells"""
    if source == 1 or target == 1:
        return np.zeros(target)
    return np.arange(target) * ((source - 1) / (target - 1))


def bilinear_resize(array: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Corner-aligned bilinear resampling of a 2-D array, clipped to the input range"""
    array = np.asarray(array, dtype=np.float64)
    if array.ndim != 2:
        raise ShapeMismatchError(f"Bilinear resize expects a 2-D array, got shape {array.shape}")
    height, width = shape
    if height < 1 or width < 1:
        raise ValueError(f"Degenerate resize target {shape}")
    rows, cols = np.meshgrid(
        _corner_aligned(array.shape[0], height), _corner_aligned(array.shape[1], width), indexing="ij"
    )
    resized = ndimage.map_coordinates(array, [rows, cols], order=1, mode="nearest")
    return np.clip(resized, array.min(), array.max())


def to_uint8(values: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def apply_colormap(values: np.ndarray) -> np.ndarray:
    """Five-stop heat ramp (black, dark red, red, yellow, white) -> uint8 RGB"""
    values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    channels = [np.interp(values, HEAT_STOPS, HEAT_COLORS[:, c]) for c in range(3)]
    return np.rint(np.stack(channels, axis=-1)).astype(np.uint8)


def read_grayscale(path: Union[str, Path]) -> np.ndarray:
    """Image file -> float array in [0, 1]"""
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("L"), dtype=np.float64)
    except (FileNotFoundError, OSError) as e:
        raise DatasetFormatError(f"Cannot read image {path}: {e}")
    return pixels / 255.0


def save_pgm(values: np.ndarray, path: Union[str, Path]) -> None:
    """Binary PGM (P5, maxval 255)"""
    Image.fromarray(to_uint8(values)).save(path, format="PPM")


def save_png(rgb: np.ndarray, path: Union[str, Path]) -> None:
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).save(path, format="PNG")
