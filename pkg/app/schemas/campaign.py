"""DTO schemas for multi-seed campaigns comparing search approaches."""
from typing import Any, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.schemas.analysis import MetricSummary, PairComparison
from app.schemas.search import Algorithm, DiversityMetric, SearchConfig, SelectionStrategy
from app.schemas.surrogate import TrainingHyperParams
from app.schemas.testbed import EnvironmentSpec

COMPARED_METRICS = (
    "total_failures",
    "unique_failures",
    "output_entropy",
    "unique_input_clusters",
    "input_entropy",
    "ttf_evaluations",
)


class Approach(BaseModel):
    """One search configuration under comparison."""
    name: str = Field(..., min_length=1, examples=["agemoea-euclidean-knee"])
    algorithm: Algorithm = Field(..., examples=["agemoea"])
    diversity: DiversityMetric = Field(default=DiversityMetric.EUCLIDEAN, examples=["euclidean"])
    selection: SelectionStrategy = Field(default=SelectionStrategy.KNEE, examples=["knee"])


class CampaignPlan(BaseModel):
    """
    Approaches x seeds grid on one environment.

    Every approach on a seed searches with the same surrogate, trained on one
    training log generated for that seed.
    """
    env: EnvironmentSpec = Field(..., examples=[{"kind": "parking"}])
    approaches: list[Approach] = Field(..., min_length=2)
    seeds: list[int] = Field(..., min_length=2, examples=[[0, 1, 2]])
    search: SearchConfig = Field(default_factory=SearchConfig, description="Search settings shared by every cell")
    max_evaluations: Optional[int] = Field(
        default=None,
        ge=1,
        examples=[5000],
        description="Evaluation budget of every cell; overrides search.max_evaluations so approaches "
        "compare at equal cost",
    )
    training_samples: int = Field(
        default=1000,
        ge=1,
        examples=[1000],
        description="Size of the training log generated once per seed and shared by every approach on that seed",
    )
    hyper: TrainingHyperParams = Field(
        default_factory=TrainingHyperParams, description="Surrogate training, once per seed (seeded with it)"
    )

    @field_validator("env", mode="before")
    @classmethod
    def env_by_name(cls, v: Any) -> Any:
        if isinstance(v, str):
            return {"kind": v}
        return v

    @model_validator(mode="after")
    def check_grid(self) -> "CampaignPlan":
        names = [a.name for a in self.approaches]
        if len(set(names)) != len(names):
            raise ValueError("approach names must be unique")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be unique")
        if any(seed < 0 for seed in self.seeds):
            raise ValueError("seeds must be non-negative")
        return self


class CampaignRow(BaseModel):
    """Metrics of one (approach, seed) cell."""
    approach: str
    seed: int
    archive_size: int
    evaluations: int
    total_failures: int
    unique_failures: int
    output_entropy: float
    unique_input_clusters: int
    input_entropy: float
    ttf_evaluations: Optional[int] = None


class CellTiming(BaseModel):
    approach: str
    seed: int
    search_seconds: float
    ttf_wall_clock: Optional[float] = None


class CampaignReport(BaseModel):
    rows: list[CampaignRow] = Field(default_factory=list)
    summary: dict[str, dict[str, MetricSummary]] = Field(
        default_factory=dict, description="approach -> metric -> median/IQR"
    )
    comparisons: list[PairComparison] = Field(default_factory=list)
    timings: list[CellTiming] = Field(default_factory=list, exclude=True)
