"""Shared fixtures: environments, schemas and small hand-built surrogates."""
import math

import numpy as np
import pytest

from app.schemas.scenario import FeatureDescriptor, FeatureKind, FeatureSchema, ListEncoding
from app.schemas.testbed import RidgeWalkerEnv, ToyParkingEnv, ToyTrackEnv
from app.services.scenario_service import encoded_width, sample_config
from app.services.surrogate_service import MlpModel
from app.services.testbed_service import parking_schema, track_schema, walker_schema

SAMPLE_PARKING_TEXT = b"""{
  "env_config": {
    "goal_lane_idx": 0,
    "heading_ego": 0.96,
    "parked_vehicles_lane_indices": [1, 3, 6, 8, 9, 10, 11, 12, 14, 18],
    "position_ego": [1.83, -4.96]
  }
}"""


def linear_model(weights, bias: float = 0.0) -> MlpModel:
    """Logistic model: a single layer with one output unit."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    return MlpModel((w,), (np.array([bias], dtype=np.float64),))


def random_model(layers: list[int], seed: int) -> MlpModel:
    rng = np.random.default_rng(seed)
    weights = tuple(rng.normal(0.0, 1.0, size=(a, b)) for a, b in zip(layers[:-1], layers[1:]))
    biases = tuple(rng.normal(0.0, 0.5, size=b) for b in layers[1:])
    return MlpModel(weights, biases)


@pytest.fixture
def parking_env() -> ToyParkingEnv:
    return ToyParkingEnv()


@pytest.fixture
def parking(parking_env) -> FeatureSchema:
    return parking_schema(parking_env)


@pytest.fixture
def walker_env() -> RidgeWalkerEnv:
    return RidgeWalkerEnv()


@pytest.fixture
def walker(walker_env) -> FeatureSchema:
    return walker_schema(walker_env)


@pytest.fixture
def track_env() -> ToyTrackEnv:
    return ToyTrackEnv()


@pytest.fixture
def track(track_env) -> FeatureSchema:
    return track_schema(track_env)


@pytest.fixture
def real_schema() -> FeatureSchema:
    return FeatureSchema(name="one-real", features=[FeatureDescriptor(name="x", kind=FeatureKind.REAL, bounds=[0.0, 10.0])])


@pytest.fixture
def list_schema() -> FeatureSchema:
    return FeatureSchema(
        name="one-list",
        features=[
            FeatureDescriptor(
                name="lanes", kind=FeatureKind.VARIABLE_LIST, encoding=ListEncoding.MEMBERSHIP, domain_size=5
            )
        ],
    )


@pytest.fixture
def parking_model(parking) -> MlpModel:
    """Analytic surrogate over the parking encoding."""
    rng = np.random.default_rng(7)
    return linear_model(rng.normal(0.0, 1.0, size=encoded_width(parking)), bias=-0.5)


@pytest.fixture
def parking_seeds(parking) -> list:
    rng = np.random.default_rng(11)
    return [sample_config(parking, rng) for _ in range(12)]


@pytest.fixture
def heading_up() -> float:
    return math.pi / 2
