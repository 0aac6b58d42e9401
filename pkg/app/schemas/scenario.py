"""DTO schemas for scenario schemas and scenario configurations."""
import math
from enum import Enum
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.logger import get_logger

logger = get_logger(__name__)


class FeatureKind(str, Enum):
    """Value kinds a scenario feature can take."""
    REAL = "real"
    INTEGER = "integer"
    BINARY = "binary"
    CATEGORICAL = "categorical"
    VARIABLE_LIST = "variable-list"


class ListEncoding(str, Enum):
    """How a variable-list feature is laid out in the encoded vector."""
    MEMBERSHIP = "membership"
    POSITIONAL = "positional"


class FeatureDescriptor(BaseModel):
    """One feature of a scenario schema."""
    name: str = Field(..., min_length=1, examples=["heading_ego"])
    kind: FeatureKind = Field(..., examples=["real"])
    size: int = Field(default=1, ge=1, description="Number of components for real/integer features")
    bounds: Optional[list[tuple[float, float]]] = Field(
        None,
        examples=[[0.0, 6.283185307179586], [[-20.0, 20.0], [-5.0, 5.0]]],
        description="Inclusive [min, max] for real/integer features; one pair per component when size > 1",
    )
    categories: Optional[int] = Field(None, ge=2, examples=[20], description="Category count for categorical features")
    encoding: ListEncoding = Field(default=ListEncoding.MEMBERSHIP, description="Layout of a variable-list feature")
    domain_size: Optional[int] = Field(
        None, ge=1, examples=[20], description="Element domain {0..domain_size-1} of a membership list"
    )
    max_length: Optional[int] = Field(None, ge=1, examples=[20], description="Maximum list length L")
    min_length: int = Field(default=0, ge=0, description="Minimum list length")
    commands: Optional[int] = Field(None, ge=2, examples=[3], description="Command count of a positional list element")
    value_bounds: Optional[tuple[float, float]] = Field(
        None, examples=[[1.0, 15.0]], description="Bounds of the value half of a positional list element"
    )

    @field_validator("bounds", mode="before")
    @classmethod
    def normalize_bounds(cls, v: Any) -> Any:
        # A flat [min, max] pair applies to every component.
        if isinstance(v, (list, tuple)) and len(v) == 2 and all(
            isinstance(b, (int, float)) and not isinstance(b, bool) for b in v
        ):
            return [tuple(v)]
        return v

    @model_validator(mode="after")
    def check_kind_fields(self) -> "FeatureDescriptor":
        logger.trace("Validating feature descriptor %s (%s)", self.name, self.kind.value)
        if self.kind in (FeatureKind.REAL, FeatureKind.INTEGER):
            if not self.bounds:
                raise ValueError(f"feature '{self.name}' needs bounds")
            if len(self.bounds) == 1 and self.size > 1:
                self.bounds = self.bounds * self.size
            if len(self.bounds) != self.size:
                raise ValueError(f"feature '{self.name}' declares size {self.size} but {len(self.bounds)} bound pairs")
            for lo, hi in self.bounds:
                if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                    raise ValueError(f"feature '{self.name}' bounds must satisfy min < max")
                if self.kind == FeatureKind.INTEGER and not (float(lo).is_integer() and float(hi).is_integer()):
                    raise ValueError(f"integer feature '{self.name}' needs integral bounds")
        elif self.kind == FeatureKind.CATEGORICAL:
            if self.categories is None:
                raise ValueError(f"categorical feature '{self.name}' needs a category count")
        elif self.kind == FeatureKind.VARIABLE_LIST:
            if self.encoding == ListEncoding.MEMBERSHIP:
                if self.domain_size is None:
                    raise ValueError(f"membership list '{self.name}' needs domain_size")
                if self.max_length is None:
                    self.max_length = self.domain_size
                if self.max_length > self.domain_size:
                    raise ValueError(f"membership list '{self.name}' cannot be longer than its domain")
            else:
                if self.commands is None or self.value_bounds is None or self.max_length is None:
                    raise ValueError(
                        f"positional list '{self.name}' needs commands, value_bounds and max_length"
                    )
                lo, hi = self.value_bounds
                if not lo < hi:
                    raise ValueError(f"positional list '{self.name}' value bounds must satisfy min < max")
            if self.min_length > self.max_length:
                raise ValueError(f"list '{self.name}' has min_length above max_length")
        if self.kind not in (FeatureKind.REAL, FeatureKind.INTEGER) and self.size != 1:
            raise ValueError(f"feature '{self.name}' of kind {self.kind.value} cannot have size > 1")
        return self

    @property
    def is_list(self) -> bool:
        return self.kind == FeatureKind.VARIABLE_LIST


class ConstraintHook(BaseModel):
    """Domain constraint enforced as the last step of repair."""
    kind: Literal["vacate_goal_lane"] = Field(..., examples=["vacate_goal_lane"])
    params: dict[str, str] = Field(
        default_factory=dict,
        examples=[{"goal": "goal_lane_idx", "occupied": "parked_vehicles_lane_indices"}],
    )


class FeatureSchema(BaseModel):
    """Ordered list of feature descriptors plus repair hooks."""
    name: str = Field(..., examples=["toy-parking"])
    features: list[FeatureDescriptor] = Field(..., min_length=1)
    constraints: list[ConstraintHook] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_names(self) -> "FeatureSchema":
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        by_name = {f.name: f for f in self.features}
        for hook in self.constraints:
            if hook.kind == "vacate_goal_lane":
                goal = by_name.get(hook.params.get("goal", ""))
                occupied = by_name.get(hook.params.get("occupied", ""))
                if goal is None or goal.kind not in (FeatureKind.CATEGORICAL, FeatureKind.INTEGER):
                    raise ValueError("vacate_goal_lane needs a categorical or integer 'goal' feature")
                if occupied is None or occupied.encoding != ListEncoding.MEMBERSHIP or not occupied.is_list:
                    raise ValueError("vacate_goal_lane needs a membership-list 'occupied' feature")
        return self

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def feature(self, name: str) -> FeatureDescriptor:
        for descriptor in self.features:
            if descriptor.name == name:
                return descriptor
        raise KeyError(name)


class ScenarioConfig(BaseModel):
    """
    One test scenario: feature name -> canonical value, in schema order.

    Canonical values: ``float``/``int`` (tuples when size > 1), ``bool``,
    sorted ``tuple[int, ...]`` for membership lists and
    ``tuple[tuple[int, float], ...]`` for positional lists.
    Treat as immutable; use :meth:`replace` to derive a new config.
    """
    model_config = ConfigDict(frozen=True)

    values: dict[str, Any]

    def __getitem__(self, name: str) -> Any:
        return self.values[name]

    def replace(self, **changes: Any) -> "ScenarioConfig":
        merged = dict(self.values)
        merged.update(changes)
        return ScenarioConfig.model_construct(values=merged)
