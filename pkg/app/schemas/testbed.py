"""Parameter models of the synthetic testbed environments."""
import math
from typing import Annotated, Any, Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator
from scipy.special import gamma


def default_lane_centers(lane_count: int) -> list[tuple[float, float]]:
    """Two facing rows of slots: the first half along y=10, the rest along y=-10, 4 units apart."""
    upper = (lane_count + 1) // 2
    centers = [(-18.0 + 4.0 * i, 10.0) for i in range(upper)]
    centers += [(-18.0 + 4.0 * i, -10.0) for i in range(lane_count - upper)]
    return centers


class ToyParkingEnv(BaseModel):
    """Kinematic parking lot: reach the goal slot without touching parked vehicles."""
    kind: Literal["parking"] = "parking"
    lane_count: int = Field(default=20, ge=2, examples=[20])
    lane_centers: Optional[list[tuple[float, float]]] = Field(
        None, description="Slot centre per lane index; defaults to two rows of ten"
    )
    radius: float = Field(default=2.0, gt=0, description="Collision radius around an occupied slot centre")
    goal_tolerance: float = Field(default=1.0, gt=0)
    max_steps: int = Field(default=100, ge=1)
    speed: float = Field(default=1.0, gt=0)
    turn_rate: float = Field(default=0.3, ge=0, description="Maximum heading change per step (radians)")
    position_bounds: list[tuple[float, float]] = Field(default_factory=lambda: [(-20.0, 20.0), (-5.0, 5.0)])
    heading_bounds: tuple[float, float] = (0.0, 2.0 * math.pi)

    @model_validator(mode="after")
    def fill_lane_centers(self) -> "ToyParkingEnv":
        if self.lane_centers is None:
            self.lane_centers = default_lane_centers(self.lane_count)
        if len(self.lane_centers) != self.lane_count:
            raise ValueError(f"expected {self.lane_count} lane centres, got {len(self.lane_centers)}")
        if len(set(self.lane_centers)) != len(self.lane_centers):
            raise ValueError("lane centres must be distinct")
        if len(self.position_bounds) != 2:
            raise ValueError("position_bounds needs one pair per axis")
        return self


class WalkerShell(BaseModel):
    """Ellipsoidal shell rin <= |(z - center) / axes| <= rout that destabilizes the walker."""
    center: tuple[float, float, float]
    axes: tuple[float, float, float]
    inner: float = Field(default=0.5, ge=0)
    outer: float = Field(default=1.0, gt=0)
    collapse_rate: float = Field(..., gt=0, description="Growth rate of the instability per step")

    @model_validator(mode="after")
    def check_radii(self) -> "WalkerShell":
        if not self.inner < self.outer:
            raise ValueError("shell inner radius must be below its outer radius")
        if any(a <= 0 for a in self.axes):
            raise ValueError("shell axes must be positive")
        return self

    def volume(self) -> float:
        d = len(self.axes)
        unit_ball = math.pi ** (d / 2) / gamma(d / 2 + 1)
        return unit_ball * math.prod(self.axes) * (self.outer ** d - self.inner ** d)


def _default_shells() -> list[WalkerShell]:
    return [
        WalkerShell(center=(-0.5, -0.5, 0.0), axes=(0.4, 0.4, 0.8), collapse_rate=0.5),
        WalkerShell(center=(0.5, 0.5, 0.0), axes=(0.4, 0.4, 0.8), collapse_rate=0.08),
    ]


class RidgeWalkerEnv(BaseModel):
    """
    Balance surrogate: height decays once the initial joint state lies inside a shell.

    With z = (joint_position, joint_velocity), u_k = (outer - r_k)(r_k - inner)
    for the ellipsoidal radius r_k of shell k, and the height at step t is
    ``stand * exp(-max(max_k u_k (1 + rate_k)^t, 0)) + wobble * sin(omega t + pi v0)``.
    The walker falls when the height drops below ``fall_threshold``; the
    failure region is the union of the shells (up to a boundary layer of
    negligible volume).
    """
    kind: Literal["walker"] = "walker"
    joint_dim: int = Field(default=2, ge=1, description="Components of joint_position")
    stand_height: float = Field(default=1.0, gt=0)
    wobble: float = Field(default=0.05, ge=0)
    omega: float = Field(default=0.3)
    fall_threshold: float = Field(default=0.5, gt=0)
    max_steps: int = Field(default=200, ge=1)
    shells: list[WalkerShell] = Field(default_factory=_default_shells)

    @model_validator(mode="after")
    def check_shells(self) -> "RidgeWalkerEnv":
        if self.fall_threshold >= self.stand_height - self.wobble:
            raise ValueError("fall_threshold must stay below the resting height band")
        for shell in self.shells:
            if len(shell.center) != self.joint_dim + 1:
                raise ValueError("shell dimension must equal joint_dim + 1")
            low = [c - a * shell.outer for c, a in zip(shell.center, shell.axes)]
            high = [c + a * shell.outer for c, a in zip(shell.center, shell.axes)]
            if min(low) < -1.0 or max(high) > 1.0:
                raise ValueError("shells must lie inside the [-1, 1] state box")
        return self

    def failure_volume_fraction(self) -> float:
        """Fraction of the [-1, 1] state box covered by the (disjoint) failure shells."""
        box = 2.0 ** (self.joint_dim + 1)
        return sum(shell.volume() for shell in self.shells) / box


class ToyTrackEnv(BaseModel):
    """Road built from (command, value) segments driven by a lagging pursuit driver."""
    kind: Literal["track"] = "track"
    max_segments: int = Field(default=12, ge=1)
    min_segments: int = Field(default=1, ge=0)
    value_bounds: tuple[float, float] = (1.0, 15.0)
    curve_radius: float = Field(default=4.0, gt=0, description="Radius of left/right arcs")
    degrees_per_unit: float = Field(default=10.0, gt=0, description="Arc angle per unit of a turn command value")
    half_width: float = Field(default=2.0, gt=0, description="Lane half-width; farther from the centreline is off-track")
    spacing: float = Field(default=0.5, gt=0, description="Centreline sampling step")
    lookahead: float = Field(default=3.0, gt=0)
    turn_rate: float = Field(default=0.2, ge=0)
    speed_bounds: tuple[float, float] = (0.5, 1.5)


EnvironmentSpec = Annotated[Union[ToyParkingEnv, RidgeWalkerEnv, ToyTrackEnv], Field(discriminator="kind")]


class EnvironmentDocument(BaseModel):
    """Wrapper so a YAML/JSON environment block validates to the right model."""
    env: EnvironmentSpec


class TrainingSample(BaseModel):
    """One labelled scenario, as stored on a training-log line."""
    env: str
    config: dict[str, Any] = Field(..., description="Scenario object in the schema's key order")
    failed: bool
