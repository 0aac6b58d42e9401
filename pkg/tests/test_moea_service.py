import math

import numpy as np
import pytest
from scipy.stats import chisquare

from app.schemas.scenario import FeatureDescriptor, FeatureKind, FeatureSchema, ScenarioConfig
from app.schemas.search import Algorithm
from app.services import moea_service
from app.services.moea_service import (
    Individual,
    crowding_distance,
    elitism,
    fast_nondominated_sort,
    mutate,
    mutate_feature,
    mutation_count,
    nondominated_fronts,
    polynomial_mutation,
    single_point_crossover,
    survival_scores,
    tournament_select,
    tournament_winner,
)
from app.services.scenario_service import build_config, is_valid, sample_config


def individuals(points) -> list[Individual]:
    return [
        Individual(config=ScenarioConfig.model_construct(values={"id": i}), objectives=tuple(map(float, p)))
        for i, p in enumerate(points)
    ]


def ids(population) -> list[int]:
    return sorted(ind.config["id"] for ind in population)


def brute_force_fronts(points: np.ndarray) -> list[set[int]]:
    def dominates(a, b):
        return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))

    remaining = set(range(len(points)))
    fronts = []
    while remaining:
        front = {i for i in remaining if not any(dominates(points[j], points[i]) for j in remaining if j != i)}
        fronts.append(front)
        remaining -= front
    return fronts


# ---------------------------------------------------------------------------
# Dominance sorting
# ---------------------------------------------------------------------------
def test_fronts_of_small_example():
    population = individuals([(1, 5), (2, 2), (5, 1), (3, 3), (4, 4), (6, 6)])
    fronts = fast_nondominated_sort(population)
    assert [ids(front) for front in fronts] == [[0, 1, 2], [3], [4], [5]]
    assert [ind.rank for ind in population] == [0, 0, 0, 1, 2, 3]


def test_single_individual_is_front_zero():
    population = individuals([(0.4, 3.0)])
    assert [ids(f) for f in fast_nondominated_sort(population)] == [[0]]
    assert population[0].rank == 0


def test_empty_population_has_no_fronts():
    assert nondominated_fronts(np.zeros((0, 2))) == []


def test_fronts_match_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        n = int(rng.integers(1, 65))
        # a coarse grid produces ties and duplicates
        points = rng.integers(0, 6, size=(n, 2)).astype(float) if trial % 2 else rng.random((n, 2))
        fronts = nondominated_fronts(points)
        assert [set(f.tolist()) for f in fronts] == brute_force_fronts(points)
        assert sum(len(f) for f in fronts) == n


def test_crowding_distance_of_three_points():
    distance = crowding_distance(individuals([(0, 2), (1, 1), (2, 0)]))
    assert distance[0] == math.inf and distance[2] == math.inf
    assert distance[1] == pytest.approx(2.0)


@pytest.mark.parametrize("points", [[(0.5, 0.5)], [(0, 1), (1, 0)]])
def test_crowding_distance_of_tiny_fronts(points):
    assert np.all(np.isinf(crowding_distance(individuals(points))))


# ---------------------------------------------------------------------------
# Elitism
# ---------------------------------------------------------------------------
@pytest.mark.parametrize("algorithm", [Algorithm.NSGA2, Algorithm.AGEMOEA])
def test_elitism_size_and_dominant_survivor(algorithm):
    rng = np.random.default_rng(1)
    for _ in range(50):
        points = rng.random((20, 2)) + 0.1
        points[7] = (0.0, 0.0)
        survivors = elitism(individuals(points), 10, algorithm)
        assert len(survivors) == 10
        assert 7 in ids(survivors)


def test_elitism_keeps_everyone_when_small():
    assert ids(elitism(individuals([(1, 2), (2, 1), (3, 3)]), 10)) == [0, 1, 2]


def test_nsga2_survival_matches_oracle():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n, size = int(rng.integers(4, 40)), int(rng.integers(1, 20))
        points = rng.random((n, 2))
        population = individuals(points)
        survivors = set(ids(elitism(population, size, Algorithm.NSGA2)))
        assert len(survivors) == min(size, n)

        kept = 0
        for front in brute_force_fronts(points):
            if kept + len(front) <= size:
                assert front <= survivors
                kept += len(front)
                continue
            members = sorted(front)
            distance = crowding_distance([population[i] for i in members])
            inside = [d for i, d in zip(members, distance) if i in survivors]
            outside = [d for i, d in zip(members, distance) if i not in survivors]
            assert len(inside) == size - kept
            if inside and outside:
                assert min(inside) >= max(outside)
            break


def test_age_moea_keeps_a_front_that_fits():
    population = individuals([(0, 1), (0.5, 0.5), (1, 0), (1, 1), (2, 2)])
    survivors = elitism(population, 3, Algorithm.AGEMOEA)
    assert ids(survivors) == [0, 1, 2]


def test_age_moea_extremes_only_score_infinite():
    scores, _, _ = survival_scores(np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros(2))
    assert np.all(np.isinf(scores))


def test_age_moea_thins_out_a_cluster():
    rng = np.random.default_rng(3)
    for size in range(3, 9):
        angles = [0.0, 30.0, 60.0, 90.0] + list(45.0 + rng.uniform(-0.05, 0.05, size=size))
        order = rng.permutation(len(angles))
        points = [(math.cos(math.radians(angles[i])), math.sin(math.radians(angles[i]))) for i in order]
        population = individuals(points)
        survivors = elitism(population, 5, Algorithm.AGEMOEA)

        kept_angles = [angles[order[i]] for i in ids(survivors)]
        for isolated in (0.0, 30.0, 60.0, 90.0):
            assert isolated in kept_angles
        assert sum(1 for a in kept_angles if 44.0 < a < 46.0) == 1


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------
def test_tournament_of_one():
    population = individuals([(0.3, 0.3)])
    assert tournament_select(population, np.random.default_rng(0)) is population[0]


def test_lower_rank_always_wins():
    a, b = individuals([(0, 0), (1, 1)])
    a.rank, b.rank = 0, 1
    a.survival_key, b.survival_key = 0.0, 100.0
    rng = np.random.default_rng(0)
    assert all(tournament_winner(a, b, rng) is a and tournament_winner(b, a, rng) is a for _ in range(100))


def test_larger_crowding_wins_within_a_rank():
    a, b = individuals([(0, 1), (1, 0)])
    a.rank = b.rank = 2
    a.survival_key, b.survival_key = 2.0, 0.5
    assert tournament_winner(b, a, np.random.default_rng(0)) is a


def test_full_tie_is_a_coin_flip():
    a, b = individuals([(0, 1), (1, 0)])
    a.rank = b.rank = 0
    rng = np.random.default_rng(4)
    wins = sum(tournament_winner(a, b, rng) is a for _ in range(2000))
    assert 800 < wins < 1200


# ---------------------------------------------------------------------------
# Crossover
# ---------------------------------------------------------------------------
@pytest.fixture
def pair_schema() -> FeatureSchema:
    return FeatureSchema(
        name="pair",
        features=[
            FeatureDescriptor(name="a", kind=FeatureKind.REAL, bounds=[0.0, 10.0]),
            FeatureDescriptor(name="b", kind=FeatureKind.REAL, bounds=[0.0, 10.0]),
        ],
    )


def test_crossover_of_equal_parents(parking):
    rng = np.random.default_rng(5)
    parent = sample_config(parking, rng)
    first, second = single_point_crossover(parent, parent, parking, rng)
    assert first.values == parent.values == second.values


def test_crossover_cut_between_two_features(pair_schema):
    p1 = build_config({"a": 1.0, "b": 2.0}, pair_schema)
    p2 = build_config({"a": 3.0, "b": 4.0}, pair_schema)
    first, second = single_point_crossover(p1, p2, pair_schema, np.random.default_rng(0))
    assert (first["a"], first["b"]) == (1.0, 4.0)
    assert (second["a"], second["b"]) == (3.0, 2.0)


def test_crossover_children_are_valid(parking):
    rng = np.random.default_rng(6)
    for _ in range(1000):
        p1, p2 = sample_config(parking, rng), sample_config(parking, rng)
        for child in single_point_crossover(p1, p2, parking, rng):
            assert is_valid(child, parking)


# ---------------------------------------------------------------------------
# Mutation
# ---------------------------------------------------------------------------
def test_categorical_mutation_always_changes():
    descriptor = FeatureDescriptor(name="c", kind=FeatureKind.CATEGORICAL, categories=5)
    rng = np.random.default_rng(7)
    for value in range(5):
        for _ in range(50):
            mutated = mutate_feature(descriptor, value, rng)
            assert mutated != value and 0 <= mutated < 5


def test_binary_mutation_flips():
    descriptor = FeatureDescriptor(name="flag", kind=FeatureKind.BINARY)
    assert mutate_feature(descriptor, True, np.random.default_rng(0)) is False


def test_polynomial_mutation_stays_in_bounds():
    rng = np.random.default_rng(8)
    values = [polynomial_mutation(-3.0, -3.0, 5.0, rng) for _ in range(10000)]
    assert min(values) >= -3.0 and max(values) <= 5.0
    values = [polynomial_mutation(5.0, -3.0, 5.0, rng, eta=1.0) for _ in range(10000)]
    assert min(values) >= -3.0 and max(values) <= 5.0


def test_empty_list_can_only_grow(list_schema):
    descriptor = list_schema.features[0]
    rng = np.random.default_rng(9)
    for _ in range(100):
        assert len(mutate_feature(descriptor, (), rng)) == 1


def test_full_membership_list_can_only_shrink(list_schema):
    descriptor = list_schema.features[0]
    rng = np.random.default_rng(10)
    for _ in range(100):
        assert len(mutate_feature(descriptor, (0, 1, 2, 3, 4), rng)) == 4


@pytest.mark.parametrize("n, expected", [(1, 1), (4, 1), (5, 2), (8, 2), (20, 5)])
def test_mutation_count(n, expected):
    assert mutation_count(n) == expected == max(1, math.ceil(0.25 * n))


def test_saliency_steers_mutation(parking):
    rng = np.random.default_rng(11)
    weights = np.array([0.0, 1.0, 0.0, 0.0])
    for _ in range(100):
        config = sample_config(parking, rng)
        mutated = mutate(config, weights, parking, rng)
        for name in ("goal_lane_idx", "parked_vehicles_lane_indices", "position_ego"):
            assert mutated[name] == config[name]
        assert mutated["heading_ego"] != config["heading_ego"]


def test_mutation_output_is_valid(parking, track):
    rng = np.random.default_rng(12)
    for schema in (parking, track):
        for _ in range(500):
            assert is_valid(mutate(sample_config(schema, rng), None, schema, rng, breadth=0.5), schema)


def picked_features(monkeypatch, schema, weights, draws: int, seed: int) -> list[str]:
    """Names of the features ``mutate`` hands to ``mutate_feature`` over ``draws`` calls."""
    picked = []

    def record(descriptor, value, rng, eta=None):
        picked.append(descriptor.name)
        return value

    monkeypatch.setattr(moea_service, "mutate_feature", record)
    rng = np.random.default_rng(seed)
    config = sample_config(schema, rng)
    for _ in range(draws):
        mutate(config, weights, schema, rng)
    return picked


@pytest.mark.parametrize("weights", [None, np.full(4, 0.3)])
def test_uniform_saliency_picks_features_evenly(monkeypatch, parking, weights):
    picked = picked_features(monkeypatch, parking, weights, draws=10000, seed=13)
    counts = [picked.count(name) for name in parking.names]
    assert sum(counts) == 10000
    assert chisquare(counts).pvalue > 0.01


@pytest.mark.parametrize("index", range(4))
def test_all_saliency_on_one_feature(monkeypatch, parking, index):
    weights = np.zeros(4)
    weights[index] = 1.0
    picked = picked_features(monkeypatch, parking, weights, draws=500, seed=14)
    assert set(picked) == {parking.names[index]}
