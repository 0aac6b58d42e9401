"""DTO schemas for search configuration, archive entries and search logs."""
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, model_validator

from app.logger import get_logger
from app.schemas.scenario import ScenarioConfig

logger = get_logger(__name__)

F1_BOUND = 1.0
F2_BOUND = 20.0


class Algorithm(str, Enum):
    """Survival scheme of the search; ``ga`` is the single-objective baseline."""
    NSGA2 = "nsga2"
    AGEMOEA = "agemoea"
    GA = "ga"


class DiversityMetric(str, Enum):
    EUCLIDEAN = "euclidean"
    PCA = "pca"


class SelectionStrategy(str, Enum):
    """How one front member is picked for the archive at the end of a run."""
    KNEE = "knee"
    MAX_O1 = "max_o1"


class SearchConfig(BaseModel):
    """Parameters of a restart-based test generation campaign."""
    test_runs: int = Field(default=10, ge=1, examples=[10], description="Archive budget TR (one scenario per run)")
    generations: int = Field(default=50, ge=1, examples=[50], description="Maximum generations G per run")
    population_size: int = Field(default=50, ge=1, examples=[50], description="Population size PS")
    crossover_rate: float = Field(default=0.75, ge=0.0, le=1.0, examples=[0.75])
    tolerance: float = Field(default=5e-6, gt=0.0, examples=[5e-6], description="Stagnation tolerance tol")
    n_last: int = Field(default=10, ge=1, examples=[10], description="Stagnation window in generations")
    reference_point: tuple[float, float] = Field(default=(1.2, 20.2), examples=[[1.2, 20.2]])
    algorithm: Algorithm = Field(default=Algorithm.NSGA2, examples=["agemoea"])
    diversity: DiversityMetric = Field(default=DiversityMetric.EUCLIDEAN, examples=["euclidean"])
    selection: SelectionStrategy = Field(default=SelectionStrategy.KNEE, examples=["knee"])
    seed: int = Field(default=0, ge=0, examples=[0])
    mutation_breadth: float = Field(
        default=0.25, gt=0.0, le=1.0, description="Fraction of features perturbed per mutation (at least one)"
    )
    eta: float = Field(default=20.0, gt=0.0, description="Polynomial mutation distribution index")
    max_evaluations: Optional[int] = Field(
        default=None,
        ge=1,
        examples=[5000],
        description="Evaluation budget; when set, runs restart until exactly this many evaluations are spent "
        "and test_runs no longer bounds the archive",
    )

    @model_validator(mode="after")
    def check_reference_point(self) -> "SearchConfig":
        f1_ref, f2_ref = self.reference_point
        if not (f1_ref > F1_BOUND and f2_ref > F2_BOUND):
            logger.warning("Rejected reference point %s", self.reference_point)
            raise ValueError(f"reference_point must exceed ({F1_BOUND}, {F2_BOUND}) componentwise")
        return self


class ArchiveEntry(BaseModel):
    """One archived scenario; entries are appended once and never changed."""
    config: ScenarioConfig
    failure_probability: float = Field(..., ge=0.0, le=1.0)
    diversity: float = Field(..., ge=0.0, description="Diversity against the archive at selection time")
    run: int = Field(..., ge=0)
    generation: int = Field(..., ge=0, description="Generation the archived individual was evaluated in")
    evaluations: int = Field(..., ge=0, description="Cumulative surrogate evaluations at selection")
    elapsed_seconds: float = Field(default=0.0, exclude=True, description="Wall-clock since search start")


class SearchLogRow(BaseModel):
    run: int
    generation: int
    hypervolume: Optional[float] = Field(None, description="Empty for the single-objective baseline")
    evaluations: int
    archive_size: int
    best_failure_probability: float


class SearchOutcome(BaseModel):
    """Archive plus per-generation log of one search invocation."""
    archive: list[ArchiveEntry] = Field(default_factory=list)
    log: list[SearchLogRow] = Field(default_factory=list)
    evaluations: int = 0
