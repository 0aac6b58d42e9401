"""Service layer for scenario configurations: encoding, validation, repair and JSON I/O."""
import json
import math
from collections.abc import Mapping
from typing import Any, Callable, Optional, Union

import numpy as np

from app.exceptions import InvalidConfig, ParseError
from app.logger import get_logger
from app.schemas.scenario import (
    ConstraintHook,
    FeatureDescriptor,
    FeatureKind,
    FeatureSchema,
    ListEncoding,
    ScenarioConfig,
)

logger = get_logger(__name__)

ENV_CONFIG_KEY = "env_config"


# ---------------------------------------------------------------------------
# Encoding layout
# ---------------------------------------------------------------------------
def block_width(descriptor: FeatureDescriptor) -> int:
    """Number of encoded scalars one feature occupies."""
    if descriptor.kind in (FeatureKind.REAL, FeatureKind.INTEGER):
        return descriptor.size
    if descriptor.kind == FeatureKind.BINARY:
        return 1
    if descriptor.kind == FeatureKind.CATEGORICAL:
        return descriptor.categories
    if descriptor.encoding == ListEncoding.MEMBERSHIP:
        return descriptor.domain_size
    return descriptor.max_length * (descriptor.commands + 1)


def feature_blocks(schema: FeatureSchema) -> dict[str, slice]:
    """Map each feature name to its slice of the encoded vector, in schema order."""
    blocks: dict[str, slice] = {}
    offset = 0
    for descriptor in schema.features:
        width = block_width(descriptor)
        blocks[descriptor.name] = slice(offset, offset + width)
        offset += width
    return blocks


def encoded_width(schema: FeatureSchema) -> int:
    return sum(block_width(d) for d in schema.features)


def _scale(value: float, lo: float, hi: float) -> float:
    return (value - lo) / (hi - lo)


def encode(config: ScenarioConfig, schema: FeatureSchema) -> np.ndarray:
    """
    Encode a valid config as a fixed-width float vector.

    Reals/integers are min-max scaled per component, categoricals one-hot,
    membership lists become an occupancy block over the element domain and
    positional lists become (command one-hot, scaled value) slots zero-padded
    to ``max_length``.
    """
    validate_config(config, schema)
    vector = np.zeros(encoded_width(schema), dtype=np.float64)
    offset = 0
    for descriptor in schema.features:
        value = config[descriptor.name]
        if descriptor.kind in (FeatureKind.REAL, FeatureKind.INTEGER):
            for i, (component, (lo, hi)) in enumerate(zip(_components(descriptor, value), descriptor.bounds)):
                vector[offset + i] = _scale(component, lo, hi)
        elif descriptor.kind == FeatureKind.BINARY:
            vector[offset] = 1.0 if value else 0.0
        elif descriptor.kind == FeatureKind.CATEGORICAL:
            vector[offset + value] = 1.0
        elif descriptor.encoding == ListEncoding.MEMBERSHIP:
            for element in value:
                vector[offset + element] = 1.0
        else:
            slot = descriptor.commands + 1
            lo, hi = descriptor.value_bounds
            for i, (command, amount) in enumerate(value):
                vector[offset + i * slot + command] = 1.0
                vector[offset + i * slot + descriptor.commands] = _scale(amount, lo, hi)
        offset += block_width(descriptor)
    vector.setflags(write=False)
    logger.trace("Encoded config to width %d", vector.shape[0])
    return vector


def encode_many(configs: list[ScenarioConfig], schema: FeatureSchema) -> np.ndarray:
    """Stack encodings row-wise; an empty list gives a (0, width) matrix."""
    if not configs:
        return np.zeros((0, encoded_width(schema)), dtype=np.float64)
    return np.vstack([encode(c, schema) for c in configs])


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------
def _components(descriptor: FeatureDescriptor, value: Any) -> tuple:
    return tuple(value) if descriptor.size > 1 else (value,)


def _check_feature(descriptor: FeatureDescriptor, value: Any) -> Optional[str]:
    """Return a description of the violation, or None when the value is valid."""
    kind = descriptor.kind
    if kind in (FeatureKind.REAL, FeatureKind.INTEGER):
        components = _components(descriptor, value)
        if len(components) != descriptor.size:
            return f"expected {descriptor.size} components"
        for component, (lo, hi) in zip(components, descriptor.bounds):
            if isinstance(component, bool) or not isinstance(component, (int, float)):
                return "non-numeric value"
            if kind == FeatureKind.INTEGER and float(component) != int(component):
                return "non-integral value"
            if not math.isfinite(component) or component < lo or component > hi:
                return f"value {component} outside [{lo}, {hi}]"
        return None
    if kind == FeatureKind.BINARY:
        return None if isinstance(value, bool) else "expected a boolean"
    if kind == FeatureKind.CATEGORICAL:
        if isinstance(value, bool) or not isinstance(value, int):
            return "expected a category index"
        if not 0 <= value < descriptor.categories:
            return f"category {value} outside [0, {descriptor.categories})"
        return None
    if len(value) > descriptor.max_length:
        return f"list longer than {descriptor.max_length}"
    if len(value) < descriptor.min_length:
        return f"list shorter than {descriptor.min_length}"
    if len(set(value)) != len(value):
        return "duplicate list elements"
    if descriptor.encoding == ListEncoding.MEMBERSHIP:
        for element in value:
            if isinstance(element, bool) or not isinstance(element, int) or not 0 <= element < descriptor.domain_size:
                return f"element {element} outside domain [0, {descriptor.domain_size})"
        return None
    lo, hi = descriptor.value_bounds
    for command, amount in value:
        if not 0 <= command < descriptor.commands:
            return f"command {command} outside [0, {descriptor.commands})"
        if not lo <= amount <= hi:
            return f"value {amount} outside [{lo}, {hi}]"
    return None


def validate_config(config: ScenarioConfig, schema: FeatureSchema) -> None:
    """Raise InvalidConfig when a feature is missing, unknown or out of bounds."""
    missing = [name for name in schema.names if name not in config.values]
    if missing:
        raise InvalidConfig(f"missing feature '{missing[0]}'")
    unknown = [name for name in config.values if name not in schema.names]
    if unknown:
        raise InvalidConfig(f"unknown feature '{unknown[0]}'")
    for descriptor in schema.features:
        problem = _check_feature(descriptor, config[descriptor.name])
        if problem:
            raise InvalidConfig(f"feature '{descriptor.name}': {problem}")
    for hook in schema.constraints:
        problem = _CONSTRAINT_CHECKS[hook.kind](config.values, hook)
        if problem:
            raise InvalidConfig(f"constraint {hook.kind}: {problem}")


def is_valid(config: ScenarioConfig, schema: FeatureSchema) -> bool:
    try:
        validate_config(config, schema)
    except InvalidConfig:
        return False
    return True


# ---------------------------------------------------------------------------
# Constraint hooks
# ---------------------------------------------------------------------------
def _vacate_goal_lane_check(values: Mapping[str, Any], hook: ConstraintHook) -> Optional[str]:
    goal = values[hook.params["goal"]]
    if goal in values[hook.params["occupied"]]:
        return f"goal lane {goal} is occupied"
    return None


def _vacate_goal_lane_repair(
    values: dict[str, Any], hook: ConstraintHook, schema: FeatureSchema, rng: np.random.Generator
) -> None:
    goal = values[hook.params["goal"]]
    occupied_name = hook.params["occupied"]
    occupied = [lane for lane in values[occupied_name] if lane != goal]
    descriptor = schema.feature(occupied_name)
    if len(occupied) < descriptor.min_length:
        free = [lane for lane in range(descriptor.domain_size) if lane != goal and lane not in occupied]
        extra = rng.choice(len(free), size=descriptor.min_length - len(occupied), replace=False)
        occupied.extend(free[i] for i in extra)
    values[occupied_name] = tuple(sorted(occupied))


_CONSTRAINT_CHECKS: dict[str, Callable[[Mapping[str, Any], ConstraintHook], Optional[str]]] = {
    "vacate_goal_lane": _vacate_goal_lane_check,
}
_CONSTRAINT_REPAIRS: dict[str, Callable[[dict, ConstraintHook, FeatureSchema, np.random.Generator], None]] = {
    "vacate_goal_lane": _vacate_goal_lane_repair,
}


# ---------------------------------------------------------------------------
# Repair
# ---------------------------------------------------------------------------
def _clamp(value: float, lo: float, hi: float) -> float:
    if not math.isfinite(value):
        return lo if value != math.inf else hi
    return min(max(value, lo), hi)


def _random_positional_element(descriptor: FeatureDescriptor, rng: np.random.Generator) -> tuple[int, float]:
    lo, hi = descriptor.value_bounds
    return int(rng.integers(descriptor.commands)), float(rng.uniform(lo, hi))


def _repair_feature(descriptor: FeatureDescriptor, value: Any, rng: np.random.Generator) -> Any:
    kind = descriptor.kind
    if kind == FeatureKind.REAL:
        repaired = tuple(
            float(_clamp(float(c), lo, hi)) for c, (lo, hi) in zip(_components(descriptor, value), descriptor.bounds)
        )
        return repaired if descriptor.size > 1 else repaired[0]
    if kind == FeatureKind.INTEGER:
        repaired = tuple(
            int(_clamp(float(round(float(c))) if math.isfinite(float(c)) else float(c), lo, hi))
            for c, (lo, hi) in zip(_components(descriptor, value), descriptor.bounds)
        )
        return repaired if descriptor.size > 1 else repaired[0]
    if kind == FeatureKind.BINARY:
        return bool(value)
    if kind == FeatureKind.CATEGORICAL:
        return int(_clamp(float(round(float(value))), 0, descriptor.categories - 1))

    if descriptor.encoding == ListEncoding.MEMBERSHIP:
        elements: list = []
        for element in value:
            element = int(element)
            if 0 <= element < descriptor.domain_size and element not in elements:
                elements.append(element)
        if len(elements) > descriptor.max_length:
            keep = rng.choice(len(elements), size=descriptor.max_length, replace=False)
            elements = [elements[i] for i in keep]
        if len(elements) < descriptor.min_length:
            free = [e for e in range(descriptor.domain_size) if e not in elements]
            extra = rng.choice(len(free), size=descriptor.min_length - len(elements), replace=False)
            elements.extend(free[i] for i in extra)
        return tuple(sorted(elements))

    lo, hi = descriptor.value_bounds
    pairs: list[tuple[int, float]] = []
    for command, amount in value:
        pair = (int(_clamp(float(round(float(command))), 0, descriptor.commands - 1)), float(_clamp(float(amount), lo, hi)))
        if pair not in pairs:
            pairs.append(pair)
    if len(pairs) > descriptor.max_length:
        # Order of the surviving commands is preserved.
        keep = np.sort(rng.choice(len(pairs), size=descriptor.max_length, replace=False))
        pairs = [pairs[i] for i in keep]
    while len(pairs) < descriptor.min_length:
        pair = _random_positional_element(descriptor, rng)
        if pair not in pairs:
            pairs.append(pair)
    return tuple(pairs)


def validate_repair(config: ScenarioConfig, schema: FeatureSchema, rng: np.random.Generator) -> ScenarioConfig:
    """
    Return a schema-valid version of ``config``.

    Numbers are clamped (integers rounded first), list elements outside the
    domain are dropped, duplicates removed and over-long lists truncated by
    removing uniformly random elements. Schema constraint hooks run last.
    ``rng`` is only consumed when a list must be truncated or padded.
    """
    missing = [name for name in schema.names if name not in config.values]
    if missing:
        raise InvalidConfig(f"missing feature '{missing[0]}'")
    values = {d.name: _repair_feature(d, config[d.name], rng) for d in schema.features}
    for hook in schema.constraints:
        _CONSTRAINT_REPAIRS[hook.kind](values, hook, schema, rng)
    return ScenarioConfig.model_construct(values=values)


# ---------------------------------------------------------------------------
# Construction and sampling
# ---------------------------------------------------------------------------
def _canonical(descriptor: FeatureDescriptor, value: Any) -> Any:
    kind = descriptor.kind
    if kind == FeatureKind.REAL:
        if descriptor.size > 1:
            return tuple(float(c) for c in value)
        return float(value)
    if kind == FeatureKind.INTEGER:
        if descriptor.size > 1:
            return tuple(int(c) for c in value)
        return int(value)
    if kind == FeatureKind.BINARY:
        return bool(value)
    if kind == FeatureKind.CATEGORICAL:
        return int(value)
    if descriptor.encoding == ListEncoding.MEMBERSHIP:
        return tuple(sorted(int(e) for e in value))
    return tuple((int(command), float(amount)) for command, amount in value)


def build_config(values: Mapping[str, Any], schema: FeatureSchema) -> ScenarioConfig:
    """Canonicalize plain Python values into a ScenarioConfig ordered like the schema (no bounds check)."""
    missing = [name for name in schema.names if name not in values]
    if missing:
        raise InvalidConfig(f"missing feature '{missing[0]}'")
    unknown = [name for name in values if name not in schema.names]
    if unknown:
        raise InvalidConfig(f"unknown feature '{unknown[0]}'")
    return ScenarioConfig.model_construct(
        values={d.name: _canonical(d, values[d.name]) for d in schema.features}
    )


def sample_config(schema: FeatureSchema, rng: np.random.Generator) -> ScenarioConfig:
    """Draw a config uniformly within schema bounds, then apply constraint hooks."""
    values: dict[str, Any] = {}
    for descriptor in schema.features:
        kind = descriptor.kind
        if kind == FeatureKind.REAL:
            drawn = tuple(float(rng.uniform(lo, hi)) for lo, hi in descriptor.bounds)
            values[descriptor.name] = drawn if descriptor.size > 1 else drawn[0]
        elif kind == FeatureKind.INTEGER:
            drawn = tuple(int(rng.integers(int(lo), int(hi) + 1)) for lo, hi in descriptor.bounds)
            values[descriptor.name] = drawn if descriptor.size > 1 else drawn[0]
        elif kind == FeatureKind.BINARY:
            values[descriptor.name] = bool(rng.random() < 0.5)
        elif kind == FeatureKind.CATEGORICAL:
            values[descriptor.name] = int(rng.integers(descriptor.categories))
        elif descriptor.encoding == ListEncoding.MEMBERSHIP:
            length = int(rng.integers(descriptor.min_length, descriptor.max_length + 1))
            values[descriptor.name] = tuple(sorted(int(e) for e in rng.choice(descriptor.domain_size, size=length, replace=False)))
        else:
            length = int(rng.integers(descriptor.min_length, descriptor.max_length + 1))
            values[descriptor.name] = tuple(_random_positional_element(descriptor, rng) for _ in range(length))
    return validate_repair(ScenarioConfig.model_construct(values=values), schema, rng)


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------
def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_integral(value: Any) -> bool:
    return _is_number(value) and float(value).is_integer()


def _type_ok(descriptor: FeatureDescriptor, raw: Any) -> bool:
    kind = descriptor.kind
    if kind in (FeatureKind.REAL, FeatureKind.INTEGER):
        check = _is_number if kind == FeatureKind.REAL else _is_integral
        if descriptor.size > 1:
            return isinstance(raw, list) and len(raw) == descriptor.size and all(check(c) for c in raw)
        return check(raw)
    if kind == FeatureKind.BINARY:
        return isinstance(raw, bool)
    if kind == FeatureKind.CATEGORICAL:
        return _is_integral(raw)
    if not isinstance(raw, list):
        return False
    if descriptor.encoding == ListEncoding.MEMBERSHIP:
        return all(_is_integral(e) for e in raw)
    return all(
        isinstance(e, list) and len(e) == 2 and _is_integral(e[0]) and _is_number(e[1]) for e in raw
    )


def parse_config(text: Union[bytes, str], schema: FeatureSchema) -> ScenarioConfig:
    """
    Parse a scenario JSON object (bare, or wrapped as ``{"env_config": {...}}``).

    Raises ParseError naming the offending key for malformed, missing, unknown
    or mistyped fields, and InvalidConfig when values break schema bounds.
    """
    try:
        payload = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ParseError("scenario must be a JSON object")
    if (
        set(payload) == {ENV_CONFIG_KEY}
        and ENV_CONFIG_KEY not in schema.names
        and isinstance(payload[ENV_CONFIG_KEY], dict)
    ):
        payload = payload[ENV_CONFIG_KEY]

    for name in schema.names:
        if name not in payload:
            logger.warning("Scenario is missing key '%s'", name)
            raise ParseError(f"missing key '{name}'", key=name)
    for key in payload:
        if key not in schema.names:
            raise ParseError(f"unknown key '{key}'", key=key)
    for descriptor in schema.features:
        if not _type_ok(descriptor, payload[descriptor.name]):
            raise ParseError(
                f"key '{descriptor.name}' has the wrong type for a {descriptor.kind.value} feature",
                key=descriptor.name,
            )
    for descriptor in schema.features:
        raw = payload[descriptor.name]
        if descriptor.is_list and descriptor.encoding == ListEncoding.MEMBERSHIP and len(set(raw)) != len(raw):
            raise InvalidConfig(f"feature '{descriptor.name}': duplicate list elements")

    config = build_config(payload, schema)
    validate_config(config, schema)
    logger.trace("Parsed scenario for schema %s", schema.name)
    return config


def config_to_dict(config: ScenarioConfig) -> dict[str, Any]:
    """JSON-ready plain values (tuples become lists)."""
    def plain(value: Any) -> Any:
        if isinstance(value, tuple):
            return [plain(v) for v in value]
        return value

    return {name: plain(value) for name, value in config.values.items()}


def serialize_config(config: ScenarioConfig) -> bytes:
    """Canonical JSON form; keys in schema order, floats at full precision."""
    return json.dumps(config_to_dict(config)).encode("utf-8")
