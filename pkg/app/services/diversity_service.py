"""Service layer for input diversity: Euclidean and PCA/K-means distance to the archive."""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from app.exceptions import DimensionMismatch, InsufficientData, InvalidK
from app.logger import get_logger
from app.schemas.search import DiversityMetric

logger = get_logger(__name__)

DIVERSITY_MAX = 20.0
PCA_VARIANCE_THRESHOLD = 0.95
PCA_MAX_COMPONENTS = 10
KMEANS_MAX_ITERATIONS = 300
SEARCH_CLUSTERS = 5
MIN_ARCHIVE_FOR_PCA = 4

SeedLike = Union[int, np.random.Generator, None]


@dataclass(frozen=True)
class PcaModel:
    """Mean, orthonormal components (one per row) and their explained variance."""
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def project(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.shape[-1] != self.mean.shape[0]:
            raise DimensionMismatch(f"point width {points.shape[-1]} != PCA width {self.mean.shape[0]}")
        return (points - self.mean) @ self.components.T


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray
    labels: np.ndarray
    inertia_trace: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def nearest_distance(self, points: np.ndarray) -> np.ndarray:
        return np.sqrt(_squared_distances(np.atleast_2d(points), self.centroids).min(axis=1))


def _as_matrix(points: Union[np.ndarray, Sequence[np.ndarray]], width: Optional[int] = None) -> np.ndarray:
    if isinstance(points, np.ndarray) and points.ndim == 2:
        matrix = points.astype(np.float64, copy=False)
    elif len(points) == 0:
        matrix = np.zeros((0, width or 0), dtype=np.float64)
    else:
        matrix = np.vstack([np.asarray(p, dtype=np.float64) for p in points])
    return matrix


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


# ---------------------------------------------------------------------------
# Euclidean
# ---------------------------------------------------------------------------
def euclidean_diversity(candidate: np.ndarray, archive: Union[np.ndarray, Sequence[np.ndarray]]) -> float:
    """Mean L2 distance from ``candidate`` to the archive; DIVERSITY_MAX for an empty archive."""
    candidate = np.asarray(candidate, dtype=np.float64)
    matrix = _as_matrix(archive, candidate.shape[0])
    if matrix.shape[0] == 0:
        return DIVERSITY_MAX
    if matrix.shape[1] != candidate.shape[0]:
        raise DimensionMismatch(f"candidate width {candidate.shape[0]} != archive width {matrix.shape[1]}")
    return float(np.linalg.norm(matrix - candidate, axis=1).mean())


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------
def fit_pca(points: np.ndarray, variance_threshold: float = PCA_VARIANCE_THRESHOLD) -> PcaModel:
    """
    Fit PCA by eigendecomposition of the sample covariance.

    Keeps the fewest components reaching ``variance_threshold`` of the total
    variance, capped at min(10, dims, points - 1). Each component is signed so
    its largest-magnitude entry is positive.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise InsufficientData("PCA needs at least 2 points")
    if not 0.0 < variance_threshold <= 1.0:
        raise ValueError("variance_threshold must lie in (0, 1]")
    n, dims = points.shape
    mean = points.mean(axis=0)
    covariance = np.atleast_2d(np.cov(points, rowvar=False, ddof=1))
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues, kind="stable")[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    total = eigenvalues.sum()
    if total > 0:
        ratios = eigenvalues / total
        k = int(np.searchsorted(np.cumsum(ratios), variance_threshold - 1e-12) + 1)
    else:
        ratios = np.zeros_like(eigenvalues)
        k = 1
    k = max(1, min(k, PCA_MAX_COMPONENTS, dims, n - 1))

    components = eigenvectors[:, :k].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    logger.debug("Fitted PCA on %d x %d points: k=%d retained=%.4f", n, dims, k, float(ratios[:k].sum()))
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=eigenvalues[:k].copy(),
        explained_variance_ratio=ratios[:k].copy(),
    )


# ---------------------------------------------------------------------------
# K-means
# ---------------------------------------------------------------------------
def _farthest_point_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(points.shape[0]))]
    closest = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(closest))
        chosen.append(nxt)
        closest = np.minimum(closest, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[chosen].copy()


def kmeans(points: np.ndarray, k: int, seed: SeedLike = 0, max_iterations: int = KMEANS_MAX_ITERATIONS) -> ClusterModel:
    """
    Lloyd's algorithm from a farthest-point start.

    The first centroid is a seeded random point, each following one the point
    farthest from those chosen. Iterates until assignments stop changing or
    ``max_iterations``; an emptied cluster keeps its previous centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1 or k > n:
        raise InvalidK(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = _farthest_point_init(points, k, rng)
    distances = _squared_distances(points, centroids)
    labels = distances.argmin(axis=1)
    trace = [float(distances[np.arange(n), labels].sum())]

    for iteration in range(max_iterations):
        updated = centroids.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                updated[j] = points[members].mean(axis=0)
        distances = _squared_distances(points, updated)
        new_labels = distances.argmin(axis=1)
        trace.append(float(distances[np.arange(n), new_labels].sum()))
        centroids = updated
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    else:
        logger.warning("K-means hit %d iterations without converging", max_iterations)
    logger.trace("K-means k=%d converged after %d iteration(s)", k, len(trace) - 1)
    return ClusterModel(centroids=centroids, labels=labels, inertia_trace=trace)


# ---------------------------------------------------------------------------
# Archive-relative scoring
# ---------------------------------------------------------------------------
class DiversityScorer:
    """
    Diversity of candidates relative to a fixed archive.

    The PCA/K-means model is fitted once at construction; archives smaller
    than 4 fall back to Euclidean distance.
    """

    def __init__(
        self,
        archive: Union[np.ndarray, Sequence[np.ndarray]],
        metric: DiversityMetric = DiversityMetric.EUCLIDEAN,
        seed: SeedLike = 0,
        width: Optional[int] = None,
    ):
        self.archive = _as_matrix(archive, width)
        self.metric = metric
        self.pca: Optional[PcaModel] = None
        self.clusters: Optional[ClusterModel] = None
        if metric == DiversityMetric.PCA and self.archive.shape[0] >= MIN_ARCHIVE_FOR_PCA:
            self.pca = fit_pca(self.archive, PCA_VARIANCE_THRESHOLD)
            projected = self.pca.project(self.archive)
            self.clusters = kmeans(projected, min(SEARCH_CLUSTERS, self.archive.shape[0]), seed)
            logger.debug(
                "Diversity model fitted on %d archived scenario(s): pca_k=%d clusters=%d",
                self.archive.shape[0], self.pca.k, self.clusters.k,
            )
        elif metric == DiversityMetric.PCA and self.archive.shape[0]:
            logger.debug("Archive of %d is too small for PCA, using Euclidean distance", self.archive.shape[0])

    def score(self, candidate: np.ndarray) -> float:
        return float(self.score_batch(np.atleast_2d(np.asarray(candidate, dtype=np.float64)))[0])

    def score_batch(self, candidates: np.ndarray) -> np.ndarray:
        candidates = np.asarray(candidates, dtype=np.float64)
        if self.archive.shape[0] == 0:
            return np.full(candidates.shape[0], DIVERSITY_MAX)
        if candidates.shape[1] != self.archive.shape[1]:
            raise DimensionMismatch(
                f"candidate width {candidates.shape[1]} != archive width {self.archive.shape[1]}"
            )
        if self.clusters is not None:
            return self.clusters.nearest_distance(self.pca.project(candidates))
        return np.sqrt(_squared_distances(candidates, self.archive)).mean(axis=1)


def pca_cluster_diversity(
    candidate: np.ndarray, archive: Union[np.ndarray, Sequence[np.ndarray]], seed: SeedLike = 0
) -> float:
    """Distance from ``candidate`` to the nearest K-means centroid of the PCA-projected archive."""
    candidate = np.asarray(candidate, dtype=np.float64)
    return DiversityScorer(archive, DiversityMetric.PCA, seed, width=candidate.shape[0]).score(candidate)
