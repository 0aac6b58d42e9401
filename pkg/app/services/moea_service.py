"""Evolutionary operators: dominance sorting, survival, selection, crossover and mutation."""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.logger import get_logger
from app.schemas.scenario import FeatureDescriptor, FeatureKind, FeatureSchema, ListEncoding, ScenarioConfig
from app.schemas.search import Algorithm
from app.services.scenario_service import validate_repair

logger = get_logger(__name__)

DEFAULT_ETA = 20.0
DEFAULT_MUTATION_BREADTH = 0.25
SALIENCY_EPSILON = 1e-12


@dataclass(slots=True)
class Individual:
    """A scenario with its objectives (both minimized) and survival metadata."""
    config: ScenarioConfig
    encoded: Optional[np.ndarray] = None
    failure_probability: float = 0.0
    diversity: float = 0.0
    objectives: tuple[float, float] = (0.0, 0.0)
    rank: int = -1
    survival_key: float = 0.0
    saliency: Optional[np.ndarray] = None
    generation: int = 0


def _objective_matrix(individuals: list[Individual]) -> np.ndarray:
    if not individuals:
        return np.zeros((0, 2))
    return np.array([ind.objectives for ind in individuals], dtype=np.float64)


# ---------------------------------------------------------------------------
# Dominance
# ---------------------------------------------------------------------------
def nondominated_fronts(objectives: np.ndarray) -> list[np.ndarray]:
    """
    Partition row indices into Pareto fronts (minimization).

    Row i dominates row j when it is <= in every objective and < in at least
    one. Indices inside a front are ascending.
    """
    objectives = np.asarray(objectives, dtype=np.float64)
    n = objectives.shape[0]
    if n == 0:
        return []
    left = objectives[:, None, :]
    right = objectives[None, :, :]
    dominates = (left <= right).all(axis=2) & (left < right).any(axis=2)
    dominated_by = dominates.sum(axis=0)
    fronts: list[np.ndarray] = []
    current = np.flatnonzero(dominated_by == 0)
    while current.size:
        fronts.append(current)
        dominated_by = dominated_by - dominates[current].sum(axis=0)
        dominated_by[current] = -1
        current = np.flatnonzero(dominated_by == 0)
    return fronts


def fast_nondominated_sort(population: list[Individual]) -> list[list[Individual]]:
    """Sort into fronts and set each individual's ``rank`` to its front index."""
    fronts = []
    for rank, indices in enumerate(nondominated_fronts(_objective_matrix(population))):
        front = [population[i] for i in indices]
        for ind in front:
            ind.rank = rank
        fronts.append(front)
    return fronts


def crowding_distance(front: list[Individual]) -> np.ndarray:
    """Deb's crowding distance; boundary members get +inf, a zero-span objective adds 0."""
    objectives = _objective_matrix(front)
    m = objectives.shape[0]
    distance = np.zeros(m)
    if m <= 2:
        distance[:] = np.inf
        return distance
    for column in objectives.T:
        order = np.argsort(column, kind="stable")
        distance[order[0]] = np.inf
        distance[order[-1]] = np.inf
        span = column[order[-1]] - column[order[0]]
        if span <= 0:
            continue
        gaps = (column[order[2:]] - column[order[:-2]]) / span
        distance[order[1:-1]] += gaps
    return distance


# ---------------------------------------------------------------------------
# AGE-MOEA survival
# ---------------------------------------------------------------------------
def _point_to_line_distance(points: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Distance of each point to the line through the origin along ``direction``."""
    t = points @ direction / (direction @ direction)
    return np.linalg.norm(points - t[:, None] * direction[None, :], axis=1)


def _corner_solutions(front: np.ndarray) -> np.ndarray:
    m, n = front.shape
    if m <= n:
        return np.arange(m)
    weights = 1e-6 + np.eye(n)
    selected = np.zeros(m, dtype=bool)
    corners = np.zeros(n, dtype=np.intp)
    for i in range(n):
        distances = _point_to_line_distance(front, weights[i])
        distances[selected] = np.inf
        corners[i] = int(np.argmin(distances))
        selected[corners[i]] = True
    return corners


def _normalization(front: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Hyperplane intercepts through the corner points, or the per-objective max when that fails."""
    fallback = front.max(axis=0)
    normalization = fallback
    if len(np.unique(front[corners], axis=0)) == len(corners):
        try:
            hyperplane = np.linalg.solve(front[corners], np.ones(front.shape[1]))
            with np.errstate(divide="ignore"):
                intercepts = 1.0 / hyperplane
            if np.all(np.isfinite(hyperplane)) and np.all(hyperplane > 0) and np.all(np.isfinite(intercepts)):
                normalization = intercepts
        except np.linalg.LinAlgError:
            pass
    normalization = np.array(normalization, dtype=np.float64)
    normalization[normalization <= 0.0] = 1.0
    return normalization


def _front_geometry(front: np.ndarray, corners: np.ndarray) -> float:
    """Estimate the Minkowski exponent p from the member nearest the front's centre line."""
    m, n = front.shape
    distances = _point_to_line_distance(front, np.ones(n))
    distances[corners] = np.inf
    index = int(np.argmin(distances))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = float(np.log(n) / np.log(1.0 / np.mean(front[index])))
    if math.isnan(p) or p <= 0.1:
        return 1.0
    return min(p, 20.0)


def _minkowski(points: np.ndarray, p: float) -> np.ndarray:
    return (np.abs(points) ** p).sum(axis=1) ** (1.0 / p)


def _pairwise_minkowski(points: np.ndarray, p: float) -> np.ndarray:
    return (np.abs(points[:, None, :] - points[None, :, :]) ** p).sum(axis=2) ** (1.0 / p)


def survival_scores(objectives: np.ndarray, ideal: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """
    Adaptive-geometry survival score of one front.

    Returns (scores, p, normalization). Corner points score +inf; the rest are
    chosen greedily, each scored by the sum of its distances to the two
    nearest already-chosen points divided by its own L_p proximity to the
    ideal point.
    """
    shifted = np.asarray(objectives, dtype=np.float64) - ideal
    m, n = shifted.shape
    scores = np.zeros(m)
    corners = _corner_solutions(shifted)
    if m <= n:
        normalization = shifted.max(axis=0)
        normalization[normalization <= 0.0] = 1.0
        scores[:] = np.inf
        return scores, 1.0, normalization

    normalization = _normalization(shifted, corners)
    front = shifted / normalization
    scores[corners] = np.inf
    selected = np.zeros(m, dtype=bool)
    selected[corners] = True
    p = _front_geometry(front, corners)

    proximity = _minkowski(front, p)
    proximity[proximity <= 0.0] = np.finfo(float).tiny
    distances = _pairwise_minkowski(front, p) / proximity[:, None]

    remaining = list(np.flatnonzero(~selected))
    while remaining:
        chosen = np.flatnonzero(selected)
        block = distances[np.ix_(remaining, chosen)]
        if block.shape[1] > 1:
            nearest = np.sort(block, axis=1)[:, :2].sum(axis=1)
        else:
            nearest = block[:, 0]
        pick = int(np.argmax(nearest))
        best = remaining.pop(pick)
        selected[best] = True
        scores[best] = nearest[pick]
    return scores, p, normalization


def _take_best(front: list[Individual], keys: np.ndarray, count: int) -> list[Individual]:
    order = np.argsort(-keys, kind="stable")
    return [front[i] for i in order[:count]]


def age_moea_survival(fronts: list[list[Individual]], target_size: int) -> list[Individual]:
    """
    Fill ``target_size`` survivors front by front.

    The first front is scored with :func:`survival_scores`; fully admitted
    later fronts get key 1 / L_p proximity in the first front's normalized
    space; the splitting front is scored with its own corners.
    """
    if not fronts:
        return []
    first = _objective_matrix(fronts[0])
    ideal = first.min(axis=0)
    first_scores, p, normalization = survival_scores(first, ideal)

    survivors: list[Individual] = []
    for index, front in enumerate(fronts):
        fits = len(survivors) + len(front) <= target_size
        if index == 0:
            keys = first_scores
        elif fits:
            proximity = _minkowski((_objective_matrix(front) - ideal) / normalization, p)
            with np.errstate(divide="ignore"):
                keys = np.where(proximity > 0, 1.0 / np.where(proximity > 0, proximity, 1.0), np.inf)
        else:
            keys, _, _ = survival_scores(_objective_matrix(front), ideal)
        for ind, key in zip(front, keys):
            ind.survival_key = float(key)
        if fits:
            survivors.extend(front)
            continue
        survivors.extend(_take_best(front, keys, target_size - len(survivors)))
        break
    logger.trace("AGE-MOEA kept %d survivor(s), p=%.3f", len(survivors), p)
    return survivors


def _nsga2_survival(fronts: list[list[Individual]], target_size: int) -> list[Individual]:
    survivors: list[Individual] = []
    for front in fronts:
        distance = crowding_distance(front)
        for ind, d in zip(front, distance):
            ind.survival_key = float(d)
        if len(survivors) + len(front) <= target_size:
            survivors.extend(front)
            continue
        survivors.extend(_take_best(front, distance, target_size - len(survivors)))
        break
    return survivors


def elitism(combined: list[Individual], size: int, algorithm: Algorithm = Algorithm.NSGA2) -> list[Individual]:
    """Keep exactly ``size`` individuals (all when fewer), ranks and survival keys refreshed."""
    fronts = fast_nondominated_sort(combined)
    target = min(size, len(combined))
    if algorithm == Algorithm.AGEMOEA:
        return age_moea_survival(fronts, target)
    return _nsga2_survival(fronts, target)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------
def tournament_winner(a: Individual, b: Individual, rng: np.random.Generator) -> Individual:
    """Lower rank wins, then higher survival key, then a fair coin."""
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.survival_key != b.survival_key:
        return a if a.survival_key > b.survival_key else b
    return a if rng.random() < 0.5 else b


def tournament_select(population: list[Individual], rng: np.random.Generator) -> Individual:
    """Binary tournament between two uniformly drawn contestants."""
    if len(population) == 1:
        return population[0]
    i, j = rng.integers(len(population), size=2)
    return tournament_winner(population[i], population[j], rng)


# ---------------------------------------------------------------------------
# Variation
# ---------------------------------------------------------------------------
def single_point_crossover(
    p1: ScenarioConfig, p2: ScenarioConfig, schema: FeatureSchema, rng: np.random.Generator
) -> tuple[ScenarioConfig, ScenarioConfig]:
    """Swap the feature tails after a uniform cut in 1..n-1; list features move whole."""
    names = schema.names
    if len(names) < 2:
        return validate_repair(p1, schema, rng), validate_repair(p2, schema, rng)
    cut = int(rng.integers(1, len(names)))
    head, tail = names[:cut], names[cut:]
    child1 = {**{n: p1[n] for n in head}, **{n: p2[n] for n in tail}}
    child2 = {**{n: p2[n] for n in head}, **{n: p1[n] for n in tail}}
    logger.trace("Crossover cut at %d (%s)", cut, names[cut])
    return (
        validate_repair(ScenarioConfig.model_construct(values=child1), schema, rng),
        validate_repair(ScenarioConfig.model_construct(values=child2), schema, rng),
    )


def polynomial_mutation(value: float, lo: float, hi: float, rng: np.random.Generator, eta: float = DEFAULT_ETA) -> float:
    """Deb's bounded polynomial mutation of one component; the result stays in [lo, hi]."""
    span = hi - lo
    delta1 = (value - lo) / span
    delta2 = (hi - value) / span
    power = 1.0 / (eta + 1.0)
    r = rng.random()
    if r <= 0.5:
        val = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - delta1) ** (eta + 1.0)
        deltaq = val ** power - 1.0
    else:
        val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - delta2) ** (eta + 1.0)
        deltaq = 1.0 - val ** power
    return min(max(value + deltaq * span, lo), hi)


def _mutate_number(descriptor: FeatureDescriptor, value, rng: np.random.Generator, eta: float):
    components = tuple(value) if descriptor.size > 1 else (value,)
    mutated = []
    for component, (lo, hi) in zip(components, descriptor.bounds):
        new = polynomial_mutation(float(component), lo, hi, rng, eta)
        mutated.append(int(round(new)) if descriptor.kind == FeatureKind.INTEGER else new)
    return tuple(mutated) if descriptor.size > 1 else mutated[0]


def _mutate_list(descriptor: FeatureDescriptor, value: tuple, rng: np.random.Generator, eta: float) -> tuple:
    elements = list(value)
    membership = descriptor.encoding == ListEncoding.MEMBERSHIP
    absent = [e for e in range(descriptor.domain_size) if e not in elements] if membership else None

    operations = []
    if len(elements) > descriptor.min_length:
        operations.append("remove")
    if len(elements) < descriptor.max_length and (not membership or absent):
        operations.append("add")
    if elements and (not membership or absent):
        operations.append("modify")
    if not operations:
        return value
    operation = operations[int(rng.integers(len(operations)))]
    logger.trace("List feature %s: %s", descriptor.name, operation)

    if operation == "remove":
        elements.pop(int(rng.integers(len(elements))))
    elif membership and operation == "add":
        elements.append(absent[int(rng.integers(len(absent)))])
    elif membership:
        elements[int(rng.integers(len(elements)))] = absent[int(rng.integers(len(absent)))]
    else:
        lo, hi = descriptor.value_bounds
        if operation == "add":
            element = (int(rng.integers(descriptor.commands)), float(rng.uniform(lo, hi)))
            elements.insert(int(rng.integers(len(elements) + 1)), element)
        else:
            slot = int(rng.integers(len(elements)))
            command, amount = elements[slot]
            elements[slot] = (int(rng.integers(descriptor.commands)), polynomial_mutation(amount, lo, hi, rng, eta))
    return tuple(elements)


def mutate_feature(descriptor: FeatureDescriptor, value, rng: np.random.Generator, eta: float = DEFAULT_ETA):
    kind = descriptor.kind
    if kind in (FeatureKind.REAL, FeatureKind.INTEGER):
        return _mutate_number(descriptor, value, rng, eta)
    if kind == FeatureKind.BINARY:
        return not value
    if kind == FeatureKind.CATEGORICAL:
        other = int(rng.integers(descriptor.categories - 1))
        return other if other < value else other + 1
    return _mutate_list(descriptor, value, rng, eta)


def mutation_count(feature_count: int, breadth: float = DEFAULT_MUTATION_BREADTH) -> int:
    return max(1, min(feature_count, math.ceil(breadth * feature_count)))


def mutate(
    config: ScenarioConfig,
    saliency_weights: Optional[np.ndarray],
    schema: FeatureSchema,
    rng: np.random.Generator,
    breadth: float = DEFAULT_MUTATION_BREADTH,
    eta: float = DEFAULT_ETA,
) -> ScenarioConfig:
    """
    Mutate ceil(breadth * n) distinct features (at least one), drawn without
    replacement with probability proportional to saliency, then repair.
    ``None`` weights mean uniform.
    """
    n = len(schema.features)
    weights = np.ones(n) if saliency_weights is None else np.asarray(saliency_weights, dtype=np.float64)
    probabilities = (weights + SALIENCY_EPSILON) / (weights + SALIENCY_EPSILON).sum()
    chosen = rng.choice(n, size=mutation_count(n, breadth), replace=False, p=probabilities)
    values = dict(config.values)
    for index in chosen:
        descriptor = schema.features[int(index)]
        values[descriptor.name] = mutate_feature(descriptor, values[descriptor.name], rng, eta)
    logger.trace("Mutated features %s", [schema.features[int(i)].name for i in chosen])
    return validate_repair(ScenarioConfig.model_construct(values=values), schema, rng)
