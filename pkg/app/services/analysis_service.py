"""Service layer for post-execution analysis: failure clustering, entropy, TTF and statistics."""
import math
from collections import Counter
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm, rankdata, tiecorrect
from sklearn.metrics import silhouette_score

from app.exceptions import EmptyInput, SampleTooSmall
from app.logger import get_logger
from app.schemas.analysis import (
    ClusteringResult,
    ExecutionRecord,
    FailureMetrics,
    InputDiversity,
    TimeToFailure,
)
from app.schemas.scenario import FeatureSchema
from app.services.diversity_service import PCA_VARIANCE_THRESHOLD, fit_pca, kmeans
from app.services.scenario_service import encode_many

logger = get_logger(__name__)

K_MAX = 10
SILHOUETTE_GAIN = 1.2
MIN_WILCOXON_SAMPLE = 5
# Hess & Kromrey thresholds on |2*A12 - 1|
A12_LEVELS = (0.147, 0.33, 0.474)
A12_MAGNITUDES = ("negligible", "small", "medium", "large")


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------
def flatten_traces(records: Sequence[ExecutionRecord]) -> np.ndarray:
    """One row per record: samples flattened in order and zero-padded to the longest trace."""
    if not records:
        raise EmptyInput("no execution records to flatten")
    rows = [np.asarray(r.trajectory, dtype=np.float64).ravel() for r in records]
    width = max(row.shape[0] for row in rows)
    matrix = np.zeros((len(rows), width))
    for i, row in enumerate(rows):
        matrix[i, : row.shape[0]] = row
    return matrix


def _silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    if len(np.unique(labels)) < 2:
        return -1.0
    return float(silhouette_score(points, labels))


def choose_k_by_silhouette(points: np.ndarray, k_max: int = K_MAX, seed: int = 0) -> ClusteringResult:
    """
    Pick the cluster count by silhouette, starting at K=2.

    K+1 is accepted only when its silhouette is at least 1.2 times that of K;
    the first rejection stops the search. Fewer than 3 points or fewer than
    2 distinct rows give K=1.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    distinct = len(np.unique(points, axis=0)) if n else 0
    k_cap = min(k_max, n - 1, distinct)
    if n < 3 or distinct < 2 or k_cap < 2:
        logger.debug("Clustering %d point(s) with %d distinct: K*=1", n, distinct)
        return ClusteringResult(k=1, labels=[0] * n)

    model = kmeans(points, 2, seed)
    silhouettes = {2: _silhouette(points, model.labels)}
    best_k, best_labels = 2, model.labels
    while best_k < k_cap:
        candidate = kmeans(points, best_k + 1, seed)
        score = _silhouette(points, candidate.labels)
        silhouettes[best_k + 1] = score
        if score < SILHOUETTE_GAIN * silhouettes[best_k]:
            break
        best_k, best_labels = best_k + 1, candidate.labels
    logger.debug("Silhouette search chose K*=%d from %s", best_k, silhouettes)
    return ClusteringResult(k=best_k, labels=[int(v) for v in best_labels], silhouettes=silhouettes)


def cluster_rows(matrix: np.ndarray, seed: int = 0) -> ClusteringResult:
    """
    PCA (95% variance) followed by the silhouette K rule.

    Rows are clustered in lexicographic order so the result does not depend
    on input order; labels are mapped back to the caller's row order.
    """
    n = matrix.shape[0]
    if n < 2:
        return ClusteringResult(k=1, labels=[0] * n)
    order = np.lexsort(matrix.T[::-1])
    ordered = matrix[order]
    projected = fit_pca(ordered, PCA_VARIANCE_THRESHOLD).project(ordered)
    result = choose_k_by_silhouette(projected, K_MAX, seed)
    labels = np.empty(n, dtype=int)
    labels[order] = result.labels
    return ClusteringResult(k=result.k, labels=labels.tolist(), silhouettes=result.silhouettes)


def _failing(records: Sequence[ExecutionRecord]) -> list[ExecutionRecord]:
    return [r for r in records if r.failed]


def cluster_failures(records: Sequence[ExecutionRecord], seed: int = 0) -> Optional[ClusteringResult]:
    """Cluster the traces of failing records; None when nothing failed."""
    failing = _failing(records)
    if not failing:
        return None
    return cluster_rows(flatten_traces(failing), seed)


def unique_failures(records: Sequence[ExecutionRecord], seed: int = 0) -> int:
    """Number of distinct failure behaviours among the failing records."""
    result = cluster_failures(records, seed)
    if result is None:
        return 0
    return len(set(result.labels))


def entropy_from_counts(counts: Sequence[int]) -> float:
    counts = [c for c in counts if c > 0]
    if not counts:
        raise EmptyInput("entropy needs at least one labelled item")
    if len(counts) == 1:
        return 0.0
    total = sum(counts)
    h = -sum((c / total) * math.log(c / total) for c in counts)
    return 100.0 * h / math.log(len(counts))


def entropy_percent(labels: Sequence[int]) -> float:
    """Normalized Shannon entropy (x100) of the cluster sizes; one cluster gives 0.0."""
    if not labels:
        raise EmptyInput("entropy needs at least one label")
    return entropy_from_counts(list(Counter(labels).values()))


def input_diversity_metrics(
    records: Sequence[ExecutionRecord], schema: FeatureSchema, seed: int = 0
) -> InputDiversity:
    """Cluster count and entropy of the encoded failing configurations."""
    failing = _failing(records)
    if not failing:
        return InputDiversity(unique_input_clusters=0, input_entropy=0.0)
    result = cluster_rows(encode_many([r.config for r in failing], schema), seed)
    return InputDiversity(
        unique_input_clusters=len(set(result.labels)),
        input_entropy=entropy_percent(result.labels),
    )


def time_to_first_failure(records: Sequence[ExecutionRecord]) -> Optional[TimeToFailure]:
    """Counters of the first failing record in execution order; None when nothing failed."""
    for record in records:
        if record.failed:
            return TimeToFailure(evaluations=record.evaluations, wall_clock=record.wall_clock)
    return None


def failure_metrics(records: Sequence[ExecutionRecord], schema: FeatureSchema, seed: int = 0) -> FailureMetrics:
    """All per-execution metrics of one set of records."""
    clustering = cluster_failures(records, seed)
    inputs = input_diversity_metrics(records, schema, seed)
    ttf = time_to_first_failure(records)
    metrics = FailureMetrics(
        executed=len(records),
        total_failures=len(_failing(records)),
        unique_failures=0 if clustering is None else len(set(clustering.labels)),
        output_entropy=0.0 if clustering is None else entropy_percent(clustering.labels),
        unique_input_clusters=inputs.unique_input_clusters,
        input_entropy=inputs.input_entropy,
        ttf_evaluations=None if ttf is None else ttf.evaluations,
        ttf_wall_clock=None if ttf is None else ttf.wall_clock,
    )
    logger.info(
        "Analyzed %d record(s): failures=%d unique=%d output_entropy=%.2f input_clusters=%d",
        metrics.executed, metrics.total_failures, metrics.unique_failures,
        metrics.output_entropy, metrics.unique_input_clusters,
    )
    return metrics


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------
def vargha_delaney_a12(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Probability that a draw from ``sample_a`` exceeds one from ``sample_b`` (ties count half)."""
    m, n = len(sample_a), len(sample_b)
    if m == 0 or n == 0:
        raise EmptyInput("A12 needs two non-empty samples")
    ranks = rankdata(np.concatenate([np.asarray(sample_a, float), np.asarray(sample_b, float)]))
    r1 = ranks[:m].sum()
    return float((2 * r1 - m * (m + 1)) / (2 * n * m))


def effect_size_magnitude(a12: float) -> str:
    scaled = abs(2.0 * a12 - 1.0)
    for level, label in zip(A12_LEVELS, A12_MAGNITUDES):
        if scaled < level:
            return label
    return A12_MAGNITUDES[-1]


def wilcoxon_rank_sum(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """
    Two-sided rank-sum p-value by normal approximation.

    Uses tie-corrected variance and a 0.5 continuity correction; identical
    pooled values give p = 1.
    """
    n1, n2 = len(sample_a), len(sample_b)
    if n1 < MIN_WILCOXON_SAMPLE or n2 < MIN_WILCOXON_SAMPLE:
        raise SampleTooSmall(f"rank-sum test needs at least {MIN_WILCOXON_SAMPLE} values per sample, got {n1} and {n2}")
    ranks = rankdata(np.concatenate([np.asarray(sample_a, float), np.asarray(sample_b, float)]))
    r1 = ranks[:n1].sum()
    expected = n1 * (n1 + n2 + 1) / 2.0
    variance = n1 * n2 * (n1 + n2 + 1) / 12.0 * tiecorrect(ranks)
    if variance <= 0:
        return 1.0
    z = max(abs(r1 - expected) - 0.5, 0.0) / math.sqrt(variance)
    return float(min(1.0, 2.0 * norm.sf(z)))
