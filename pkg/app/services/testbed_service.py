"""Synthetic environments: schemas, analytic simulators and training-log generation."""
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from app.exceptions import EmptyInput, InvalidConfig
from app.logger import get_logger
from app.schemas.analysis import ExecutionRecord, FailureKind
from app.schemas.scenario import (
    ConstraintHook,
    FeatureDescriptor,
    FeatureKind,
    FeatureSchema,
    ListEncoding,
    ScenarioConfig,
)
from app.schemas.search import ArchiveEntry
from app.schemas.testbed import RidgeWalkerEnv, ToyParkingEnv, ToyTrackEnv
from app.services.scenario_service import sample_config, validate_config

logger = get_logger(__name__)

Environment = Union[ToyParkingEnv, RidgeWalkerEnv, ToyTrackEnv]

ENVIRONMENTS = {"parking": ToyParkingEnv, "walker": RidgeWalkerEnv, "track": ToyTrackEnv}

WALKER_CHUNK = 4096


def make_env(name: str) -> Environment:
    """Default environment by name (parking, walker or track)."""
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise InvalidConfig(f"unknown environment '{name}', expected one of {sorted(ENVIRONMENTS)}") from None


# ---------------------------------------------------------------------------
# Schemas
# ---------------------------------------------------------------------------
def parking_schema(env: ToyParkingEnv) -> FeatureSchema:
    """Same keys as a highway-env parking ``env_config``."""
    return FeatureSchema(
        name="toy-parking",
        features=[
            FeatureDescriptor(name="goal_lane_idx", kind=FeatureKind.CATEGORICAL, categories=env.lane_count),
            FeatureDescriptor(name="heading_ego", kind=FeatureKind.REAL, bounds=[env.heading_bounds]),
            FeatureDescriptor(
                name="parked_vehicles_lane_indices",
                kind=FeatureKind.VARIABLE_LIST,
                encoding=ListEncoding.MEMBERSHIP,
                domain_size=env.lane_count,
                max_length=env.lane_count,
            ),
            FeatureDescriptor(name="position_ego", kind=FeatureKind.REAL, size=2, bounds=env.position_bounds),
        ],
        constraints=[
            ConstraintHook(
                kind="vacate_goal_lane",
                params={"goal": "goal_lane_idx", "occupied": "parked_vehicles_lane_indices"},
            )
        ],
    )


def walker_schema(env: RidgeWalkerEnv) -> FeatureSchema:
    return FeatureSchema(
        name="ridge-walker",
        features=[
            FeatureDescriptor(name="joint_position", kind=FeatureKind.REAL, size=env.joint_dim, bounds=[(-1.0, 1.0)]),
            FeatureDescriptor(name="joint_velocity", kind=FeatureKind.REAL, bounds=[(-1.0, 1.0)]),
        ],
    )


def track_schema(env: ToyTrackEnv) -> FeatureSchema:
    return FeatureSchema(
        name="toy-track",
        features=[
            FeatureDescriptor(
                name="road",
                kind=FeatureKind.VARIABLE_LIST,
                encoding=ListEncoding.POSITIONAL,
                commands=3,
                value_bounds=env.value_bounds,
                max_length=env.max_segments,
                min_length=env.min_segments,
            ),
            FeatureDescriptor(name="driver_speed", kind=FeatureKind.REAL, bounds=[env.speed_bounds]),
        ],
    )


def schema_for(env: Environment) -> FeatureSchema:
    if isinstance(env, ToyParkingEnv):
        return parking_schema(env)
    if isinstance(env, RidgeWalkerEnv):
        return walker_schema(env)
    return track_schema(env)


# ---------------------------------------------------------------------------
# Parking
# ---------------------------------------------------------------------------
def _wrap_angle(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def simulate_parking(env: ToyParkingEnv, config: ScenarioConfig) -> ExecutionRecord:
    """
    Drive at constant speed, turning toward the goal slot by at most ``turn_rate`` per step.

    Fails on coming within ``radius`` of an occupied slot centre (collision)
    or on not reaching the goal within ``max_steps`` (timeout).
    """
    validate_config(config, parking_schema(env))
    centers = np.asarray(env.lane_centers, dtype=np.float64)
    goal = centers[config["goal_lane_idx"]]
    occupied = centers[list(config["parked_vehicles_lane_indices"])]
    x, y = config["position_ego"]
    heading = config["heading_ego"]

    def obstacle_distance(px: float, py: float) -> float:
        if occupied.shape[0] == 0:
            return math.inf
        return float(np.hypot(occupied[:, 0] - px, occupied[:, 1] - py).min())

    trajectory = [[x, y]]
    closest = obstacle_distance(x, y)
    kind = FailureKind.TIMEOUT
    if closest < env.radius:
        kind = FailureKind.COLLISION
    elif math.hypot(goal[0] - x, goal[1] - y) <= env.goal_tolerance:
        kind = FailureKind.NONE
    else:
        for _ in range(env.max_steps):
            bearing = math.atan2(goal[1] - y, goal[0] - x)
            turn = _wrap_angle(bearing - heading)
            heading += max(-env.turn_rate, min(env.turn_rate, turn))
            x += env.speed * math.cos(heading)
            y += env.speed * math.sin(heading)
            trajectory.append([x, y])
            closest = min(closest, obstacle_distance(x, y))
            if closest < env.radius:
                kind = FailureKind.COLLISION
                break
            if math.hypot(goal[0] - x, goal[1] - y) <= env.goal_tolerance:
                kind = FailureKind.NONE
                break
    logger.trace("Parking run: %s after %d step(s)", kind.value, len(trajectory) - 1)
    return ExecutionRecord(
        config=config,
        failed=kind != FailureKind.NONE,
        failure_kind=kind,
        trajectory=trajectory,
        min_obstacle_distance=None if math.isinf(closest) else closest,
    )


# ---------------------------------------------------------------------------
# Walker
# ---------------------------------------------------------------------------
def _walker_states(config: ScenarioConfig) -> np.ndarray:
    position = config["joint_position"]
    position = position if isinstance(position, tuple) else (position,)
    return np.array([*position, config["joint_velocity"]], dtype=np.float64)


def _walker_instability(env: RidgeWalkerEnv, states: np.ndarray, t: np.ndarray) -> np.ndarray:
    """max_k u_k (1 + rate_k)^t for each state (rows) and step (columns)."""
    worst = np.full((states.shape[0], t.shape[0]), -np.inf)
    for shell in env.shells:
        r = np.linalg.norm((states - np.asarray(shell.center)) / np.asarray(shell.axes), axis=1)
        u0 = (shell.outer - r) * (r - shell.inner)
        worst = np.maximum(worst, u0[:, None] * (1.0 + shell.collapse_rate) ** t[None, :])
    return worst


def walker_heights(env: RidgeWalkerEnv, states: np.ndarray) -> np.ndarray:
    """Height at steps 0..max_steps for each initial state row."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    t = np.arange(env.max_steps + 1, dtype=np.float64)
    with np.errstate(over="ignore"):
        instability = np.maximum(_walker_instability(env, states, t), 0.0)
    wobble = env.wobble * np.sin(env.omega * t[None, :] + math.pi * states[:, -1:])
    return env.stand_height * np.exp(-instability) + wobble


def walker_fall_mask(env: RidgeWalkerEnv, states: np.ndarray) -> np.ndarray:
    """Whether each initial state falls within ``max_steps``; evaluated in chunks."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    falls = np.zeros(states.shape[0], dtype=bool)
    for start in range(0, states.shape[0], WALKER_CHUNK):
        heights = walker_heights(env, states[start:start + WALKER_CHUNK])
        falls[start:start + WALKER_CHUNK] = (heights < env.fall_threshold).any(axis=1)
    return falls


def simulate_walker(env: RidgeWalkerEnv, config: ScenarioConfig) -> ExecutionRecord:
    """Height trace up to the first fall (inclusive) or ``max_steps``."""
    validate_config(config, walker_schema(env))
    heights = walker_heights(env, _walker_states(config))[0]
    below = np.flatnonzero(heights < env.fall_threshold)
    failed = below.size > 0
    trace = heights[: below[0] + 1] if failed else heights
    logger.trace("Walker run: %s after %d step(s)", "fall" if failed else "stable", len(trace) - 1)
    return ExecutionRecord(
        config=config,
        failed=bool(failed),
        failure_kind=FailureKind.FALL if failed else FailureKind.NONE,
        trajectory=[[float(h)] for h in trace],
    )


# ---------------------------------------------------------------------------
# Track
# ---------------------------------------------------------------------------
STRAIGHT, LEFT, RIGHT = 0, 1, 2


def track_centerline(env: ToyTrackEnv, road: tuple[tuple[int, float], ...]) -> np.ndarray:
    """Centreline points every ``spacing`` units, starting at the origin heading east."""
    points = [(0.0, 0.0)]
    x, y, heading = 0.0, 0.0, 0.0
    for command, value in road:
        if command == STRAIGHT:
            length = value
            curvature = 0.0
        else:
            angle = math.radians(value * env.degrees_per_unit)
            length = angle * env.curve_radius
            curvature = (1.0 if command == LEFT else -1.0) / env.curve_radius
        steps = max(1, int(round(length / env.spacing)))
        ds = length / steps
        for _ in range(steps):
            heading += curvature * ds / 2.0
            x += ds * math.cos(heading)
            y += ds * math.sin(heading)
            heading += curvature * ds / 2.0
            points.append((x, y))
    return np.asarray(points)


@dataclass
class _Pursuit:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    index: int = 0


def simulate_track(env: ToyTrackEnv, config: ScenarioConfig) -> ExecutionRecord:
    """
    Pursuit driver following the road centreline.

    The driver steers toward the point ``lookahead`` ahead of its nearest
    centreline point with a limited turn rate; it fails when farther than
    ``half_width`` from the centreline and succeeds at the road's end.
    """
    validate_config(config, track_schema(env))
    line = track_centerline(env, config["road"])
    speed = config["driver_speed"]
    ahead = max(1, int(round(env.lookahead / env.spacing)))
    window = max(ahead, int(math.ceil(2.0 * speed / env.spacing)) + 2)
    road_length = (line.shape[0] - 1) * env.spacing
    max_steps = int(math.ceil(2.0 * road_length / speed)) + 20

    car = _Pursuit()
    trajectory = [[car.x, car.y]]
    kind = FailureKind.TIMEOUT
    for _ in range(max_steps):
        target = line[min(car.index + ahead, line.shape[0] - 1)]
        turn = _wrap_angle(math.atan2(target[1] - car.y, target[0] - car.x) - car.heading)
        car.heading += max(-env.turn_rate, min(env.turn_rate, turn))
        car.x += speed * math.cos(car.heading)
        car.y += speed * math.sin(car.heading)
        trajectory.append([car.x, car.y])

        segment = line[car.index: car.index + window + 1]
        distances = np.hypot(segment[:, 0] - car.x, segment[:, 1] - car.y)
        nearest = int(np.argmin(distances))
        car.index += nearest
        if distances[nearest] > env.half_width:
            kind = FailureKind.OFF_TRACK
            break
        if car.index >= line.shape[0] - 1:
            kind = FailureKind.NONE
            break
    logger.trace("Track run: %s after %d step(s)", kind.value, len(trajectory) - 1)
    return ExecutionRecord(
        config=config,
        failed=kind != FailureKind.NONE,
        failure_kind=kind,
        trajectory=trajectory,
    )


# ---------------------------------------------------------------------------
# Dispatch and training logs
# ---------------------------------------------------------------------------
def simulate(env: Environment, config: ScenarioConfig) -> ExecutionRecord:
    if isinstance(env, ToyParkingEnv):
        return simulate_parking(env, config)
    if isinstance(env, RidgeWalkerEnv):
        return simulate_walker(env, config)
    return simulate_track(env, config)


@dataclass(frozen=True)
class TrainingLog:
    """Labelled scenarios; ``failing`` is the seed set for search initialization."""
    configs: list[ScenarioConfig]
    labels: list[int]

    @property
    def failing(self) -> list[ScenarioConfig]:
        return [c for c, label in zip(self.configs, self.labels) if label]


def generate_training_log(env: Environment, n: int, seed: int) -> TrainingLog:
    """Sample ``n`` scenarios uniformly within schema bounds and label each by execution."""
    if n < 1:
        raise EmptyInput("a training log needs at least one scenario")
    schema = schema_for(env)
    rng = np.random.default_rng(seed)
    configs = [sample_config(schema, rng) for _ in range(n)]
    labels = [int(simulate(env, c).failed) for c in configs]
    logger.info("Generated %d %s scenario(s), %d failing", n, env.kind, sum(labels))
    return TrainingLog(configs=configs, labels=labels)


def execute_archive(env: Environment, entries: list[ArchiveEntry]) -> list[ExecutionRecord]:
    """Run archived scenarios in order, stamping each record with its selection counters."""
    records = []
    for entry in entries:
        record = simulate(env, entry.config)
        records.append(
            record.model_copy(update={"evaluations": entry.evaluations, "wall_clock": entry.elapsed_seconds})
        )
    logger.info("Executed %d archived scenario(s), %d failing", len(records), sum(r.failed for r in records))
    return records
