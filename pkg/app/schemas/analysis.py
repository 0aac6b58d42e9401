"""DTO schemas for executed scenarios and post-execution metrics."""
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field

from app.schemas.scenario import ScenarioConfig


class FailureKind(str, Enum):
    NONE = "none"
    COLLISION = "collision"
    TIMEOUT = "timeout"
    FALL = "fall"
    OFF_TRACK = "off_track"


class ExecutionRecord(BaseModel):
    """One scenario executed in a testbed environment."""
    config: ScenarioConfig
    failed: bool
    failure_kind: FailureKind = FailureKind.NONE
    trajectory: list[list[float]] = Field(
        ..., min_length=1, description="Per-step samples: [x, y] positions or [height]"
    )
    evaluations: int = Field(default=0, ge=0, description="Surrogate evaluations spent when the scenario was found")
    wall_clock: float = Field(default=0.0, ge=0.0, description="Seconds since search start when found")
    min_obstacle_distance: Optional[float] = Field(None, description="Closest approach to a parked vehicle")


class ClusteringResult(BaseModel):
    k: int = Field(..., ge=1)
    labels: list[int]
    silhouettes: dict[int, float] = Field(default_factory=dict, description="Silhouette score per tested K")


class TimeToFailure(BaseModel):
    evaluations: int
    wall_clock: float


class InputDiversity(BaseModel):
    unique_input_clusters: int
    input_entropy: float


class FailureMetrics(BaseModel):
    """Metric summary of one set of executed scenarios."""
    executed: int
    total_failures: int
    unique_failures: int
    output_entropy: float
    unique_input_clusters: int
    input_entropy: float
    ttf_evaluations: Optional[int] = Field(None, description="Empty when nothing failed")
    ttf_wall_clock: Optional[float] = Field(None, description="Empty when nothing failed")


class PairComparison(BaseModel):
    metric: str
    approach_a: str
    approach_b: str
    p_value: Optional[float] = Field(None, description="Empty when a sample holds fewer than 5 values")
    a12: Optional[float] = None
    magnitude: Optional[str] = None


class MetricSummary(BaseModel):
    median: Optional[float] = None
    q1: Optional[float] = None
    q3: Optional[float] = None
    iqr: Optional[float] = None
    n: int = 0
