"""Service layer for the surrogate MLP: training, prediction, saliency and model files."""
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import ValidationError
from scipy.special import expit

from app.exceptions import DegenerateData, DimensionMismatch, FormatError
from app.logger import get_logger
from app.schemas.scenario import FeatureSchema
from app.schemas.surrogate import ModelDocument, TrainingHyperParams, TrainingReport
from app.services.scenario_service import feature_blocks

logger = get_logger(__name__)

PROBABILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class MlpModel:
    """Feed-forward classifier: ReLU hidden layers, one sigmoid output unit."""
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionMismatch("weights and biases must pair up, one per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionMismatch(f"layer {i} has weight shape {w.shape} and bias shape {b.shape}")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise DimensionMismatch(f"layer {i} input {w.shape[0]} != previous output {self.weights[i - 1].shape[1]}")
        if self.weights[-1].shape[1] != 1:
            raise DimensionMismatch("output layer must have exactly one unit")
        for array in (*self.weights, *self.biases):
            array.setflags(write=False)

    @property
    def layers(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[0]


@dataclass(frozen=True)
class TrainingSet:
    """Encoded scenarios with labels (1 = fail, 0 = pass)."""
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[0],):
            raise DimensionMismatch(
                f"inputs {self.inputs.shape} and labels {self.labels.shape} do not pair up"
            )


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------
def _check_width(model: MlpModel, x: np.ndarray) -> None:
    if x.shape[-1] != model.input_width:
        raise DimensionMismatch(f"input width {x.shape[-1]} != model input width {model.input_width}")


def _forward(model: MlpModel, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Return (activations, pre-activations); activations[0] is the input."""
    activations = [x]
    pre_activations = []
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = activations[-1] @ w + b
        pre_activations.append(z)
        if i < len(model.weights) - 1:
            activations.append(np.maximum(z, 0.0))
    return activations, pre_activations


def _probability(logit: np.ndarray) -> np.ndarray:
    return np.clip(expit(logit), PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)


def predict(model: MlpModel, x: np.ndarray) -> float:
    """Failure probability of one encoded scenario, strictly inside (0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    _check_width(model, x)
    _, pre = _forward(model, x.reshape(1, -1))
    return float(_probability(pre[-1])[0, 0])


def predict_batch(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise DimensionMismatch("predict_batch expects a 2-D matrix")
    _check_width(model, inputs)
    _, pre = _forward(model, inputs)
    return _probability(pre[-1])[:, 0]


def input_gradients(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """Signed gradient of the predicted probability w.r.t. each input, one row per input row."""
    inputs = np.asarray(inputs, dtype=np.float64)
    _check_width(model, inputs)
    activations, pre = _forward(model, inputs)
    p = expit(pre[-1])
    delta = p * (1.0 - p)
    for i in range(len(model.weights) - 1, -1, -1):
        delta = delta @ model.weights[i].T
        if i > 0:
            delta = delta * (pre[i - 1] > 0)
    return delta


def input_gradient(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return input_gradients(model, x.reshape(1, -1))[0]


def _aggregate_saliency(gradient: np.ndarray, schema: Optional[FeatureSchema]) -> np.ndarray:
    magnitude = np.abs(gradient)
    if schema is not None:
        blocks = feature_blocks(schema)
        if sum(s.stop - s.start for s in blocks.values()) != magnitude.shape[-1]:
            raise DimensionMismatch("schema encoded width does not match the model input width")
        magnitude = np.stack([magnitude[..., s].sum(axis=-1) for s in blocks.values()], axis=-1)
    total = magnitude.sum(axis=-1, keepdims=True)
    uniform = np.full_like(magnitude, 1.0 / magnitude.shape[-1])
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, magnitude / np.where(total > 0, total, 1.0), uniform)


def saliency(model: MlpModel, x: np.ndarray, schema: Optional[FeatureSchema] = None) -> np.ndarray:
    """
    Normalized per-feature weights from the absolute input gradient.

    With a schema, gradients are summed over each feature's encoded block and
    the result follows schema feature order; otherwise one weight per input.
    All-zero gradients yield uniform weights.
    """
    return _aggregate_saliency(input_gradient(model, x), schema)


def saliency_batch(model: MlpModel, inputs: np.ndarray, schema: Optional[FeatureSchema] = None) -> np.ndarray:
    return _aggregate_saliency(input_gradients(model, inputs), schema)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------
def _bce_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, logits) - labels * logits))


def _initial_model(layers: list[int], rng: np.random.Generator) -> tuple[list[np.ndarray], list[np.ndarray]]:
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(layers[:-1], layers[1:])):
        if i < len(layers) - 2:
            scale = np.sqrt(2.0 / fan_in)  # He, for ReLU layers
        else:
            scale = np.sqrt(2.0 / (fan_in + fan_out))  # Xavier, for the sigmoid output
        weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _loss(weights: list[np.ndarray], biases: list[np.ndarray], inputs: np.ndarray, labels: np.ndarray) -> float:
    model = MlpModel(tuple(w.copy() for w in weights), tuple(b.copy() for b in biases))
    _, pre = _forward(model, inputs)
    return _bce_from_logits(pre[-1][:, 0], labels)


def train(data: TrainingSet, hyper: Optional[TrainingHyperParams] = None) -> tuple[MlpModel, TrainingReport]:
    """
    Fit an MLP by mini-batch SGD on binary cross-entropy.

    Deterministic given ``hyper.seed``: initialization and the per-epoch
    shuffles draw from one generator seeded with it.
    """
    hyper = hyper or TrainingHyperParams()
    inputs = np.asarray(data.inputs, dtype=np.float64)
    labels = np.asarray(data.labels, dtype=np.float64)
    positives = int(labels.sum())
    logger.info(
        "Training surrogate on %d samples (%d failing), hidden=%s, epochs=%d",
        len(labels), positives, hyper.hidden, hyper.epochs,
    )
    if positives == 0 or positives == len(labels):
        logger.warning("Training data holds a single class (%d/%d failing)", positives, len(labels))
        raise DegenerateData("training data needs both failing and passing examples")

    rng = np.random.default_rng(hyper.seed)
    layers = [inputs.shape[1], *hyper.hidden, 1]
    weights, biases = _initial_model(layers, rng)
    n = len(labels)
    loss_history = [_loss(weights, biases, inputs, labels)]

    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            x, y = inputs[idx], labels[idx]
            activations = [x]
            pre = []
            for i, (w, b) in enumerate(zip(weights, biases)):
                z = activations[-1] @ w + b
                pre.append(z)
                if i < len(weights) - 1:
                    activations.append(np.maximum(z, 0.0))
            delta = (expit(pre[-1]) - y[:, None]) / len(idx)
            for i in range(len(weights) - 1, -1, -1):
                grad_w = activations[i].T @ delta
                grad_b = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ weights[i].T) * (pre[i - 1] > 0)
                weights[i] -= hyper.learning_rate * grad_w
                biases[i] -= hyper.learning_rate * grad_b
        loss_history.append(_loss(weights, biases, inputs, labels))
        if (epoch + 1) % 50 == 0:
            logger.debug("Epoch %d/%d loss=%.6f", epoch + 1, hyper.epochs, loss_history[-1])

    model = MlpModel(tuple(weights), tuple(biases))
    accuracy = float(np.mean((predict_batch(model, inputs) >= 0.5) == (labels >= 0.5)))
    report = TrainingReport(
        samples=n,
        positives=positives,
        final_loss=loss_history[-1],
        accuracy=accuracy,
        loss_history=loss_history,
    )
    logger.info("Surrogate trained: final_loss=%.6f accuracy=%.4f", report.final_loss, accuracy)
    return model, report


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------
def save_model(model: MlpModel) -> bytes:
    document = {
        "layers": model.layers,
        "weights": [w.ravel(order="C").tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "activation": "relu-sigmoid",
    }
    return json.dumps(document).encode("utf-8")


def load_model(data: bytes) -> MlpModel:
    """Rebuild a model from :func:`save_model` output; FormatError on anything malformed."""
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"model file is not valid JSON: {exc}") from exc
    try:
        document = ModelDocument.model_validate(raw)
    except ValidationError as exc:
        raise FormatError(f"model file is malformed: {exc.errors()[0]['msg']}") from exc

    weights, biases = [], []
    for fan_in, fan_out, w, b in zip(document.layers[:-1], document.layers[1:], document.weights, document.biases):
        weights.append(np.array(w, dtype=np.float64).reshape(fan_in, fan_out))
        biases.append(np.array(b, dtype=np.float64))
    if not all(np.all(np.isfinite(a)) for a in (*weights, *biases)):
        raise FormatError("model file holds non-finite weights")
    logger.debug("Loaded surrogate with layers %s", document.layers)
    return MlpModel(tuple(weights), tuple(biases))
