import numpy as np
import pytest

from src.data import synth_speech_task
from src.evaluation import (
    background_region,
    band_mask,
    heat_focus_rate,
    ink_mask,
    ink_region,
    mask_contrast,
)


def test_mask_contrast_splits_means():
    heat = np.array([[1.0, 0.0], [0.5, 0.0]])
    inside, outside = mask_contrast(heat, np.array([[True, False], [True, False]]))
    assert (inside, outside) == (0.75, 0.0)


def test_mask_contrast_needs_two_regions():
    with pytest.raises(ValueError):
        mask_contrast(np.ones((2, 2)), np.ones((2, 2), dtype=bool))
    with pytest.raises(ValueError):
        mask_contrast(np.ones((2, 2)), np.zeros((3, 3), dtype=bool))


def test_masks():
    np.testing.assert_array_equal(ink_mask(np.array([[0.0, 0.2]])), [[False, True]])
    mask = band_mask((2, 5), (1, 3))
    np.testing.assert_array_equal(mask[0], [False, True, True, False, False])


def test_speech_regions_come_from_bands(shapes_data):
    speech = synth_speech_task(2, seed=0)
    region = background_region(speech, 1)
    start, stop = speech.bands[1]
    assert not region[:, start:stop].any()
    assert region.shape == (32, 32)
    with pytest.raises(ValueError):
        background_region(shapes_data, 0)
    assert ink_region(shapes_data, 0).sum() == shapes_data.images[0].sum()


def test_heat_focus_rate_is_a_fraction(shapes_model, shapes_data):
    rate = heat_focus_rate(shapes_model, shapes_data, ink_region, count=4)
    assert 0.0 <= rate <= 1.0
    lenient = heat_focus_rate(shapes_model, shapes_data, ink_region, count=4, strict=False)
    assert lenient >= rate
