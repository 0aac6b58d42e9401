import math

import numpy as np
import pytest

from app.exceptions import EmptyInput, SampleTooSmall
from app.schemas.analysis import ExecutionRecord
from app.schemas.scenario import ScenarioConfig
from app.schemas.testbed import ToyParkingEnv
from app.services import analysis_service
from app.services.analysis_service import (
    choose_k_by_silhouette,
    effect_size_magnitude,
    entropy_from_counts,
    entropy_percent,
    failure_metrics,
    flatten_traces,
    input_diversity_metrics,
    time_to_first_failure,
    unique_failures,
    vargha_delaney_a12,
    wilcoxon_rank_sum,
)
from app.services.scenario_service import build_config
from app.services.testbed_service import parking_schema, simulate_parking

EMPTY = ScenarioConfig.model_construct(values={})


def record(trajectory, failed=True, evaluations=0, config=EMPTY) -> ExecutionRecord:
    return ExecutionRecord(config=config, failed=failed, trajectory=trajectory, evaluations=evaluations)


@pytest.fixture
def planted_env() -> ToyParkingEnv:
    """Goal straight ahead, one parked vehicle on each side, no steering."""
    return ToyParkingEnv(lane_count=3, lane_centers=[(0.0, 20.0), (-3.0, 10.0), (3.0, 10.0)], turn_rate=0.0)


def planted_records(env: ToyParkingEnv, seed: int) -> list[ExecutionRecord]:
    """Six scenarios crashing into the left vehicle and six into the right one."""
    schema = parking_schema(env)
    rng = np.random.default_rng(seed)
    records = []
    for dx in (-3.0, 3.0):
        for _ in range(6):
            values = {
                "goal_lane_idx": 0,
                "heading_ego": math.atan2(10.0, dx) + float(rng.uniform(-0.02, 0.02)),
                "parked_vehicles_lane_indices": [1, 2],
                "position_ego": [float(v) for v in rng.uniform(-0.1, 0.1, size=2)],
            }
            records.append(simulate_parking(env, build_config(values, schema)))
    return records


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------
def test_flatten_pads_short_traces():
    matrix = flatten_traces([record([[1, 2], [3, 4]]), record([[5, 6]])])
    assert matrix.tolist() == [[1, 2, 3, 4], [5, 6, 0, 0]]


def test_flatten_needs_records():
    with pytest.raises(EmptyInput):
        flatten_traces([])


def test_identical_points_form_one_cluster():
    assert choose_k_by_silhouette(np.ones((8, 3))).k == 1


def test_degenerate_data_gives_one_cluster():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        points = np.tile(rng.normal(size=3), (int(rng.integers(1, 30)), 1))
        assert choose_k_by_silhouette(points, seed=seed).k == 1


def test_two_blobs_give_two_clusters():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        points = np.vstack([rng.normal(0.0, 0.1, size=(20, 2)), rng.normal(10.0, 0.1, size=(20, 2))])
        result = choose_k_by_silhouette(points, seed=seed)
        assert result.k == 2
        assert result.silhouettes[2] > 0.9


def test_silhouette_gain_rule(monkeypatch):
    points = np.random.default_rng(0).normal(size=(10, 2))
    scores = iter([0.5, 0.55])
    monkeypatch.setattr(analysis_service, "_silhouette", lambda *_: next(scores))
    assert choose_k_by_silhouette(points).k == 2


def test_silhouette_gain_rule_accepts_twenty_percent(monkeypatch):
    points = np.random.default_rng(0).normal(size=(10, 2))
    scores = iter([0.5, 0.6, 0.7])
    monkeypatch.setattr(analysis_service, "_silhouette", lambda *_: next(scores))
    result = choose_k_by_silhouette(points)
    assert result.k == 3
    assert result.silhouettes == {2: 0.5, 3: 0.6, 4: 0.7}


def test_no_failures_no_unique_failures():
    assert unique_failures([record([[0.0]], failed=False)] * 3) == 0


def test_single_failure_is_one_mode():
    assert unique_failures([record([[0.0, 1.0]]), record([[5.0]], failed=False)]) == 1


def test_planted_failure_modes_are_recovered(planted_env):
    for seed in range(20):
        records = planted_records(planted_env, seed)
        assert all(r.failed for r in records)
        assert unique_failures(records, seed) == 2


def test_unique_failures_ignore_record_order(planted_env):
    records = planted_records(planted_env, 3)
    rng = np.random.default_rng(3)
    for _ in range(5):
        shuffled = [records[i] for i in rng.permutation(len(records))]
        assert unique_failures(shuffled) == unique_failures(records)


# ---------------------------------------------------------------------------
# Entropy and input diversity
# ---------------------------------------------------------------------------
@pytest.mark.parametrize("counts, expected", [([5, 5], 100.0), ([10], 0.0), ([8, 2], 72.19)])
def test_entropy_from_counts(counts, expected):
    assert entropy_from_counts(counts) == pytest.approx(expected, abs=0.01)


def test_entropy_of_labels():
    assert entropy_percent([0, 1, 2, 0, 1, 2]) == pytest.approx(100.0)
    with pytest.raises(EmptyInput):
        entropy_percent([])


def test_identical_inputs_are_one_cluster(parking):
    config = build_config(
        {"goal_lane_idx": 0, "heading_ego": 1.0, "parked_vehicles_lane_indices": [2], "position_ego": [0.0, 0.0]},
        parking,
    )
    metrics = input_diversity_metrics([record([[0.0]], config=config)] * 4, parking)
    assert (metrics.unique_input_clusters, metrics.input_entropy) == (1, 0.0)


def test_input_diversity_of_planted_modes(planted_env):
    metrics = input_diversity_metrics(planted_records(planted_env, 0), parking_schema(planted_env))
    assert metrics.unique_input_clusters == 2
    assert metrics.input_entropy == pytest.approx(100.0)


def test_input_diversity_without_failures(parking):
    metrics = input_diversity_metrics([record([[0.0]], failed=False)], parking)
    assert (metrics.unique_input_clusters, metrics.input_entropy) == (0, 0.0)


def test_time_to_first_failure():
    records = [record([[0.0]], failed=False, evaluations=10), record([[0.0]], evaluations=30), record([[0.0]], evaluations=50)]
    assert time_to_first_failure(records).evaluations == 30
    assert time_to_first_failure(records[:1]) is None


def test_failure_metrics_of_planted_modes(planted_env):
    records = planted_records(planted_env, 1)
    metrics = failure_metrics(records, parking_schema(planted_env))
    assert metrics.executed == metrics.total_failures == 12
    assert metrics.unique_failures == 2
    assert metrics.output_entropy == pytest.approx(100.0)
    assert metrics.ttf_evaluations == 0


def test_failure_metrics_without_failures(parking):
    metrics = failure_metrics([], parking)
    assert metrics.total_failures == metrics.unique_failures == 0
    assert metrics.ttf_evaluations is None


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------
def test_a12_identical_samples():
    assert vargha_delaney_a12([1, 2, 3], [1, 2, 3]) == pytest.approx(0.5)


def test_a12_disjoint_samples():
    assert vargha_delaney_a12([5, 6, 7], [1, 2]) == pytest.approx(1.0)


def test_a12_with_a_tie():
    assert vargha_delaney_a12([1, 2], [2, 3]) == pytest.approx(0.125)


def test_a12_is_complementary():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.normal(size=8), rng.normal(size=11)
        assert vargha_delaney_a12(a, b) + vargha_delaney_a12(b, a) == pytest.approx(1.0)


def test_a12_needs_values():
    with pytest.raises(EmptyInput):
        vargha_delaney_a12([], [1.0])


def test_wilcoxon_identical_samples():
    assert wilcoxon_rank_sum([1, 2, 3, 4, 5], [1, 2, 3, 4, 5]) > 0.5


def test_wilcoxon_shifted_samples():
    sample = np.random.default_rng(1).normal(size=20)
    assert wilcoxon_rank_sum(sample, sample + 1000.0) < 0.001


def test_wilcoxon_constant_pool():
    assert wilcoxon_rank_sum([2.0] * 6, [2.0] * 6) == 1.0


def test_wilcoxon_needs_five_values():
    with pytest.raises(SampleTooSmall):
        wilcoxon_rank_sum([1, 2, 3], [4, 5, 6, 7, 8])


@pytest.mark.parametrize(
    "a12, expected", [(0.5, "negligible"), (0.6, "small"), (0.7, "medium"), (0.8, "large"), (0.2, "large")]
)
def test_effect_size_magnitude(a12, expected):
    assert effect_size_magnitude(a12) == expected
