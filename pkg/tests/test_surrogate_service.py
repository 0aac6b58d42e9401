import json

import numpy as np
import pytest

from app.exceptions import DegenerateData, DimensionMismatch, FormatError
from app.schemas.scenario import FeatureDescriptor, FeatureKind, FeatureSchema
from app.schemas.surrogate import TrainingHyperParams
from app.services.surrogate_service import (
    MlpModel,
    TrainingSet,
    input_gradient,
    load_model,
    predict,
    predict_batch,
    saliency,
    save_model,
    train,
)
from conftest import linear_model, random_model


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------
def test_zero_model_predicts_one_half():
    model = MlpModel((np.zeros((3, 4)), np.zeros((4, 1))), (np.zeros(4), np.zeros(1)))
    assert predict(model, np.array([0.3, -2.0, 7.0])) == 0.5


def test_single_linear_layer_is_a_sigmoid():
    assert predict(linear_model([2.0]), np.array([1.0])) == pytest.approx(0.8808, abs=1e-4)


def test_predict_width_mismatch():
    with pytest.raises(DimensionMismatch):
        predict(linear_model([1.0, 1.0]), np.array([1.0]))


def test_predictions_stay_strictly_inside_unit_interval():
    model = linear_model([1e4, -1e4])
    values = predict_batch(model, np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]))
    assert np.all(values > 0.0) and np.all(values < 1.0)


def test_inconsistent_layers_rejected():
    with pytest.raises(DimensionMismatch):
        MlpModel((np.zeros((3, 4)), np.zeros((5, 1))), (np.zeros(4), np.zeros(1)))


# ---------------------------------------------------------------------------
# saliency
# ---------------------------------------------------------------------------
def test_saliency_of_linear_model():
    model = linear_model([3.0, -4.0])
    assert input_gradient(model, np.zeros(2)).tolist() == pytest.approx([0.75, -1.0])
    assert saliency(model, np.zeros(2)).tolist() == pytest.approx([3 / 7, 4 / 7])


def test_zero_gradient_gives_uniform_saliency():
    assert saliency(linear_model([0.0, 0.0, 0.0, 0.0]), np.ones(4)).tolist() == pytest.approx([0.25] * 4)


def test_saliency_sums_feature_blocks():
    schema = FeatureSchema(
        name="blocks",
        features=[
            FeatureDescriptor(name="pos", kind=FeatureKind.REAL, size=2, bounds=[0.0, 1.0]),
            FeatureDescriptor(name="flag", kind=FeatureKind.BINARY),
        ],
    )
    weights = saliency(linear_model([1.0, -1.0, 2.0]), np.zeros(3), schema)
    assert weights.tolist() == pytest.approx([0.5, 0.5])


def test_gradient_matches_central_differences():
    h = 1e-4
    rng = np.random.default_rng(2024)
    checked = 0
    for trial in range(100):
        model = random_model([4, 6, 1], seed=trial)
        x = rng.uniform(-1.0, 1.0, size=4)
        # stay clear of ReLU kinks so the finite difference is smooth
        while np.abs(x @ model.weights[0] + model.biases[0]).min() < 1e-2:
            x = rng.uniform(-1.0, 1.0, size=4)
        analytic = input_gradient(model, x)
        numeric = np.array(
            [(predict(model, x + h * e) - predict(model, x - h * e)) / (2 * h) for e in np.eye(4)]
        )
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)
        checked += 1
    assert checked == 100


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------
def separable_set(n: int = 200, seed: int = 0) -> TrainingSet:
    rng = np.random.default_rng(seed)
    points = []
    while len(points) < n:
        p = rng.uniform(-1.0, 1.0, size=2)
        if abs(p[0] - p[1]) > 0.2:
            points.append(p)
    inputs = np.array(points)
    labels = (inputs[:, 0] > inputs[:, 1]).astype(np.float64)
    return TrainingSet(inputs=inputs, labels=labels)


def test_train_learns_separable_data():
    _, report = train(separable_set(), TrainingHyperParams(hidden=[16], learning_rate=0.2, epochs=200))
    assert report.accuracy >= 0.95
    assert report.samples == 200
    assert len(report.loss_history) == 201
    assert report.loss_history[-1] < report.loss_history[0]


def test_full_batch_loss_never_increases():
    data = separable_set(n=120, seed=4)
    hyper = TrainingHyperParams(hidden=[8], learning_rate=1e-3, epochs=50, batch_size=120, seed=5)
    _, report = train(data, hyper)
    history = report.loss_history
    assert len(history) == 51
    assert all(later <= earlier + 1e-9 for earlier, later in zip(history, history[1:]))
    assert history[-1] < history[0]


def test_train_rejects_single_class():
    data = TrainingSet(inputs=np.zeros((10, 2)), labels=np.ones(10))
    with pytest.raises(DegenerateData):
        train(data)


def test_train_is_deterministic_under_seed():
    hyper = TrainingHyperParams(hidden=[8], epochs=20, seed=3)
    first, _ = train(separable_set(), hyper)
    second, _ = train(separable_set(), hyper)
    for a, b in zip(first.weights + first.biases, second.weights + second.biases):
        assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------
def test_model_round_trip_preserves_predictions():
    rng = np.random.default_rng(1)
    for seed in range(10):
        model = random_model([5, 7, 3, 1], seed=seed)
        restored = load_model(save_model(model))
        x = rng.normal(size=(8, 5))
        assert np.array_equal(predict_batch(model, x), predict_batch(restored, x))
        assert restored.layers == [5, 7, 3, 1]


def test_truncated_model_file():
    data = save_model(random_model([3, 2, 1], seed=0))
    with pytest.raises(FormatError):
        load_model(data[: len(data) // 2])


def test_mismatched_weight_count():
    document = json.loads(save_model(random_model([3, 2, 1], seed=0)))
    document["weights"][0] = document["weights"][0][:-1]
    with pytest.raises(FormatError):
        load_model(json.dumps(document).encode())


def test_non_finite_weights_rejected():
    document = json.loads(save_model(random_model([2, 1], seed=0)))
    text = json.dumps(document).replace(str(document["weights"][0][0]), "NaN", 1)
    with pytest.raises(FormatError):
        load_model(text.encode())
