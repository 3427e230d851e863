import numpy as np
import pytest
from scipy.special import logsumexp

from src.errors import InvalidClassError, ShapeMismatchError
from src.gradcheck import model_gradient_errors
from src.hybrid import (
    QUANTUM_PARAMETERS,
    HybridModel,
    ModelSpec,
    backward,
    build_model,
    evaluate,
    forward,
    loss,
    predict,
)


def test_pixel_model_scores_cos_arctan(pixel_model):
    for pixel in (0.0, 0.3, 1.0, 4.0):
        image = np.zeros((2, 2))
        image[0, 1] = pixel
        scores, _ = forward(pixel_model, image)
        assert scores[0] == pytest.approx(np.cos(np.arctan(pixel)), abs=1e-13)
    scores, _ = forward(pixel_model, np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert scores[0] == pytest.approx(1 / np.sqrt(2), abs=1e-13)


def test_zero_readout_gives_zero_scores(tiny_model, rng):
    tiny_model.readout_weight[:] = 0.0
    scores, _ = forward(tiny_model, rng.uniform(size=(8, 8)))
    np.testing.assert_array_equal(scores, np.zeros(2))


def test_uniform_scores_cost_ln_num_classes():
    assert loss(np.zeros(2), 1) == pytest.approx(np.log(2))
    assert loss(np.array([3.0, 3.0, 3.0]), 3) == pytest.approx(np.log(3))


def test_loss_matches_log_softmax(rng):
    scores = rng.normal(size=5) * 20
    for label in range(1, 6):
        assert loss(scores, label) == pytest.approx(logsumexp(scores) - scores[label - 1])
    assert np.isfinite(loss(np.array([1000.0, -1000.0]), 2))


def test_invalid_labels_are_rejected():
    for label in (0, 3, -1, True, 1.0):
        with pytest.raises(InvalidClassError):
            loss(np.zeros(2), label)


def test_input_shape_is_checked(tiny_model):
    with pytest.raises(ShapeMismatchError):
        forward(tiny_model, np.zeros((9, 9)))


def test_model_spec_requires_matching_class_count(tiny_model):
    data = tiny_model.spec.model_dump()
    data["num_classes"] = 3
    with pytest.raises(ValueError):
        ModelSpec.model_validate(data)


def test_backward_requires_cache(tiny_model):
    with pytest.raises(ValueError):
        backward(tiny_model, None, 1)


def test_parameters_are_ordered_and_live(tiny_model):
    names = list(tiny_model.parameters())
    assert names == [
        "cnn.kernel.0", "cnn.kernel.1", "cnn.kernel.2",
        "cnn.bias.0", "cnn.bias.1", "cnn.bias.2",
        "projection.weight", "projection.bias", "vqc.theta", "readout.weight", "readout.bias",
    ]
    assert names == list(HybridModel.parameter_shapes(tiny_model.spec))
    tiny_model.parameters()["vqc.theta"][0, 0] = 7.0
    assert tiny_model.theta[0, 0] == 7.0
    assert QUANTUM_PARAMETERS == {"vqc.theta"}


def test_copy_is_independent(tiny_model):
    clone = tiny_model.copy()
    clone.projection_weight[0, 0] += 1.0
    assert clone.projection_weight[0, 0] != tiny_model.projection_weight[0, 0]


def test_initialization_is_seeded():
    a = build_model((1, 8, 8), 2, qubits=2, blocks=1, seed=11)
    b = build_model((1, 8, 8), 2, qubits=2, blocks=1, seed=11)
    for name, value in a.parameters().items():
        np.testing.assert_array_equal(value, b.parameters()[name])


def test_backward_matches_finite_differences(tiny_model, rng):
    """Every parameter block of a 4-qubit, 2-block model on an 8x8 input"""
    for bias in tiny_model.cnn.biases:
        bias[:] = rng.normal(scale=0.1, size=bias.shape)
    tiny_model.projection_bias[:] = rng.normal(scale=0.1, size=tiny_model.projection_bias.shape)
    image = rng.uniform(size=(8, 8))
    errors = model_gradient_errors(tiny_model, image, label=2, h=1e-6, entries=20, floor=1e-5)
    assert set(errors) == set(tiny_model.parameters())
    for name, err in errors.items():
        bound = 1e-3 if name in QUANTUM_PARAMETERS else 1e-4
        assert err <= bound, (name, err)


def test_predictions_are_one_based(tiny_model, rng):
    images = rng.uniform(size=(4, 8, 8))
    labels = predict(tiny_model, images)
    assert set(labels) <= {1, 2}
    for image, label in zip(images, labels):
        assert label == int(np.argmax(forward(tiny_model, image)[0])) + 1


def test_evaluate_counts_matches(shapes_model, shapes_data):
    accuracy = evaluate(shapes_model, shapes_data)
    expected = np.mean(predict(shapes_model, shapes_data.images) == shapes_data.labels)
    assert accuracy == pytest.approx(expected)
    with pytest.raises(ValueError):
        evaluate(shapes_model, shapes_data.take([]))
