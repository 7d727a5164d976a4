"""
Anchors - K-means estimation of segment-length anchors and head kernel sizes

Lengths are one-dimensional, so small inputs are clustered exactly with a
dynamic program over the sorted values. Larger inputs fall back to seeded
k-means++ initialisation followed by Lloyd iterations.
"""

import math
from typing import List, Sequence, Tuple

import numpy as np

from bimodal_captioner.data.features import MODALITIES
from bimodal_captioner.errors import ConfigurationError, DataError
from bimodal_captioner.model.proposal_generator import AnchorSet
from bimodal_captioner.utils.logger import get_logger

logger = get_logger(__name__)

# Inputs up to this many points are clustered exactly
EXACT_LIMIT = 512
MAX_ITERATIONS = 300
N_INIT = 10


def inertia(values: np.ndarray, centroids: np.ndarray) -> float:
    """Sum of squared distances from each value to its nearest centroid."""
    values = np.asarray(values, dtype=np.float64)
    distances = (values[:, None] - np.asarray(centroids, dtype=np.float64)[None, :]) ** 2
    return float(distances.min(axis=1).sum())


def _exact_kmeans(values: np.ndarray, k: int) -> np.ndarray:
    x = np.sort(values)
    n = x.size
    prefix = np.concatenate([[0.0], np.cumsum(x)])
    prefix_sq = np.concatenate([[0.0], np.cumsum(x * x)])

    # cost[i, j]: within-cluster sum of squares of x[i..j]
    i_idx, j_idx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    counts = np.maximum(j_idx - i_idx + 1, 1)
    sums = prefix[j_idx + 1] - prefix[i_idx]
    cost = prefix_sq[j_idx + 1] - prefix_sq[i_idx] - sums * sums / counts
    cost = np.where(j_idx >= i_idx, np.maximum(cost, 0.0), np.inf)

    best = cost[0].copy()
    starts = np.zeros((k, n), dtype=np.int64)
    for m in range(1, k):
        previous = np.concatenate([[np.inf], best[:-1]])
        candidates = previous[:, None] + cost
        starts[m] = np.argmin(candidates, axis=0)
        best = candidates[starts[m], np.arange(n)]

    centroids = np.empty(k)
    end = n - 1
    for m in range(k - 1, -1, -1):
        start = starts[m, end] if m > 0 else 0
        centroids[m] = x[start:end + 1].mean()
        end = start - 1
    return np.sort(centroids)


def _kmeans_plus_plus(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = [values[rng.integers(values.size)]]
    for _ in range(1, k):
        distances = ((values[:, None] - np.asarray(centroids)[None, :]) ** 2).min(axis=1)
        total = distances.sum()
        if total <= 0:
            centroids.append(values[rng.integers(values.size)])
            continue
        centroids.append(values[rng.choice(values.size, p=distances / total)])
    return np.asarray(centroids, dtype=np.float64)


def lloyd_kmeans(values: np.ndarray, k: int, rng: np.random.Generator,
                 max_iterations: int = MAX_ITERATIONS) -> np.ndarray:
    """
    One seeded k-means++ initialisation refined by Lloyd iterations.

    Args:
        values: 1-D data
        k: Number of clusters
        rng: Seeded generator
        max_iterations: Iteration cap

    Returns:
        Sorted centroids
    """
    values = np.asarray(values, dtype=np.float64)
    centroids = _kmeans_plus_plus(values, k, rng)
    for _ in range(max_iterations):
        labels = np.argmin((values[:, None] - centroids[None, :]) ** 2, axis=1)
        updated = centroids.copy()
        for c in range(k):
            members = values[labels == c]
            if members.size:
                updated[c] = members.mean()
            else:
                # Empty cluster: reseed at the point farthest from its centroid
                distances = (values - centroids[labels]) ** 2
                updated[c] = values[int(np.argmax(distances))]
        if np.array_equal(updated, centroids):
            break
        centroids = updated
    return np.sort(centroids)


def kmeans_1d(values: Sequence[float], k: int, seed: int = 0) -> Tuple[np.ndarray, float]:
    """
    Cluster one-dimensional values.

    Args:
        values: Data points
        k: Number of clusters
        seed: Seed of the k-means++ restarts used above the exact-solver limit

    Returns:
        Sorted centroids and their inertia
    """
    values = np.asarray(values, dtype=np.float64)
    if k < 1:
        raise ConfigurationError(f"cluster count must be at least 1, got {k}")
    distinct = np.unique(values).size
    if distinct < k:
        raise DataError(f"need at least {k} distinct lengths for {k} clusters, got {distinct}")
    if values.size <= EXACT_LIMIT:
        centroids = _exact_kmeans(values, k)
        return centroids, inertia(values, centroids)

    rng = np.random.default_rng(seed)
    best, best_inertia = None, np.inf
    for _ in range(N_INIT):
        centroids = lloyd_kmeans(values, k, rng)
        score = inertia(values, centroids)
        if score < best_inertia:
            best, best_inertia = centroids, score
    return best, best_inertia


def estimate_anchors(gt_lengths_sec: Sequence[float], count: int, cell_seconds: float, seed: int = 0,
                     modality: str = "audio") -> AnchorSet:
    """
    Estimate anchors as K-means centroids of ground-truth segment lengths.

    Args:
        gt_lengths_sec: Segment lengths in seconds
        count: Number of anchors
        cell_seconds: Duration of one grid cell of the modality
        seed: Clustering seed
        modality: Modality the anchors are for

    Returns:
        Anchors in grid-cell units, ascending
    """
    if modality not in MODALITIES:
        raise ConfigurationError(f"unknown modality '{modality}'")
    if cell_seconds <= 0:
        raise ConfigurationError(f"cell_seconds must be positive, got {cell_seconds}")
    centroids, score = kmeans_1d(gt_lengths_sec, count, seed)
    logger.debug("%s anchors: %d clusters, inertia %.6f", modality, count, score)
    return AnchorSet(modality, tuple(centroids / cell_seconds), cell_seconds)


def odd_kernel_size(cells: float) -> int:
    """Round a length in cells up to the next odd integer (at least 1)."""
    size = max(1, math.ceil(cells - 1e-9))
    return size if size % 2 == 1 else size + 1


def estimate_kernel_sizes(gt_lengths_sec: Sequence[float], count: int, cell_seconds: float,
                          seed: int = 0) -> List[int]:
    """
    Kernel sizes for ``count`` proposal heads from clustered segment lengths.

    Args:
        gt_lengths_sec: Segment lengths in seconds
        count: Number of heads
        cell_seconds: Duration of one grid cell
        seed: Clustering seed

    Returns:
        Distinct odd kernel sizes in ascending order
    """
    if cell_seconds <= 0:
        raise ConfigurationError(f"cell_seconds must be positive, got {cell_seconds}")
    centroids, _ = kmeans_1d(gt_lengths_sec, count, seed)
    sizes: List[int] = []
    for centroid in centroids:
        size = odd_kernel_size(centroid / cell_seconds)
        if sizes and size <= sizes[-1]:
            size = sizes[-1] + 2
        sizes.append(size)
    return sizes
