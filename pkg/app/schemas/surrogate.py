"""DTO schemas for the surrogate classifier: hyperparameters, training report and model file."""
from typing import Literal

from pydantic import BaseModel, Field, model_validator


class TrainingHyperParams(BaseModel):
    """Mini-batch SGD settings for the surrogate MLP."""
    hidden: list[int] = Field(default_factory=lambda: [64], examples=[[64]], description="Hidden layer sizes")
    learning_rate: float = Field(default=0.05, gt=0, examples=[0.05])
    epochs: int = Field(default=200, ge=1, examples=[200])
    batch_size: int = Field(default=32, ge=1, examples=[32])
    seed: int = Field(default=0, ge=0, examples=[0])

    @model_validator(mode="after")
    def check_hidden(self) -> "TrainingHyperParams":
        if any(size < 1 for size in self.hidden):
            raise ValueError("hidden layer sizes must be positive")
        return self


class TrainingReport(BaseModel):
    """Outcome of one training call."""
    samples: int
    positives: int
    final_loss: float
    accuracy: float = Field(description="Accuracy on the training data at threshold 0.5")
    loss_history: list[float] = Field(description="Full-data loss before training and after every epoch")


class ModelDocument(BaseModel):
    """On-disk JSON layout of a surrogate model."""
    layers: list[int] = Field(..., min_length=2, examples=[[24, 64, 1]])
    weights: list[list[float]] = Field(..., description="Row-major (fan_in x fan_out) weights per layer")
    biases: list[list[float]]
    activation: Literal["relu-sigmoid"] = "relu-sigmoid"

    @model_validator(mode="after")
    def check_shapes(self) -> "ModelDocument":
        if self.layers[-1] != 1:
            raise ValueError("output layer must have exactly one unit")
        if any(size < 1 for size in self.layers):
            raise ValueError("layer sizes must be positive")
        expected = len(self.layers) - 1
        if len(self.weights) != expected or len(self.biases) != expected:
            raise ValueError(f"expected {expected} weight and bias arrays")
        for i, (fan_in, fan_out) in enumerate(zip(self.layers[:-1], self.layers[1:])):
            if len(self.weights[i]) != fan_in * fan_out:
                raise ValueError(
                    f"layer {i} declares {fan_in}x{fan_out} weights but holds {len(self.weights[i])}"
                )
            if len(self.biases[i]) != fan_out:
                raise ValueError(f"layer {i} declares {fan_out} biases but holds {len(self.biases[i])}")
        return self
