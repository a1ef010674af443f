"""
Shared geometry: pseudo-class assignment, exact distances, k-nearest-neighbor
queries and density distances.

All distances are exact Euclidean distances (scipy cdist).  Large inputs are
processed in row blocks so memory stays O(rows * block).  Ties between equal
distances always go to the lower pool index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .activeft_core import CoreSet
from .errors import ConfigurationError, DegenerateSubsetError
from .feature_store import FeaturePool

logger = logging.getLogger(__name__)

DEFAULT_BLOCK = 4096


@dataclass(frozen=True)
class PseudoCluster:
    """Members assigned to one pseudo-class center, in ascending pool order."""

    position: int
    center_index: int
    member_indices: Tuple[int, ...]

    def __post_init__(self):
        if self.center_index not in self.member_indices:
            raise ConfigurationError(
                f"center {self.center_index} is not a member of pseudo-class {self.position}")

    @property
    def size(self) -> int:
        return len(self.member_indices)

    def restricted(self, keep: Sequence[int]) -> "PseudoCluster":
        """Same pseudo-class with only the ``keep`` members (kept ascending)."""
        return PseudoCluster(self.position, self.center_index,
                             tuple(sorted(int(i) for i in keep)))


@dataclass(frozen=True)
class DensityProfile:
    """Mean distance of every subset point to its k nearest other subset points."""

    rho: np.ndarray
    k_neighbors: int
    subset: Tuple[int, ...]
    warnings: Tuple[str, ...] = field(default=(), compare=False)


def row_blocks(n_rows: int, block_size: int = DEFAULT_BLOCK) -> Iterator[slice]:
    for start in range(0, n_rows, block_size):
        yield slice(start, min(n_rows, start + block_size))


def distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance matrix in float64."""
    return cdist(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def assign_clusters(pool: FeaturePool, cores: CoreSet,
                    block_size: int = DEFAULT_BLOCK) -> List[PseudoCluster]:
    """Assign every sample to its nearest center (ties to the lower center position)."""
    features = pool.as_float64()
    centers = np.asarray(cores.center_indices, dtype=np.int64)
    center_features = features[centers]
    labels = np.empty(pool.n, dtype=np.int64)
    for rows in row_blocks(pool.n, block_size):
        labels[rows] = np.argmin(distances(features[rows], center_features), axis=1)
    # coincident centers would otherwise collapse into the first one
    labels[centers] = np.arange(len(centers))

    clusters = []
    for pos, center in enumerate(centers):
        members = tuple(int(i) for i in np.flatnonzero(labels == pos))
        clusters.append(PseudoCluster(pos, int(center), members))
    logger.info("Assigned %d samples to %d pseudo-classes (sizes %d..%d)", pool.n, len(clusters),
                min(c.size for c in clusters), max(c.size for c in clusters))
    return clusters


def density_distance(pool: FeaturePool, subset: Sequence[int], k: int,
                     block_size: int = DEFAULT_BLOCK) -> DensityProfile:
    """Density distance of every subset member, neighbors taken from the subset only.

    A point is never its own neighbor.  ``k`` larger than ``len(subset) - 1``
    is clamped and the clamp is recorded as a warning.
    """
    idx = np.asarray(subset, dtype=np.int64)
    m = idx.size
    if m < 2:
        raise DegenerateSubsetError(f"density distance needs at least 2 points, got {m}")
    if k < 1:
        raise ConfigurationError(f"k must be a positive integer, got {k}")
    notes = []
    if k > m - 1:
        notes.append(f"k={k} clamped to {m - 1} for a subset of {m} points")
        logger.warning(notes[-1])
        k = m - 1

    features = pool.as_float64()[idx]
    rho = np.empty(m)
    for rows in row_blocks(m, block_size):
        block = distances(features[rows], features)
        block[np.arange(rows.stop - rows.start), np.arange(rows.start, rows.stop)] = np.inf
        nearest = np.partition(block, k - 1, axis=1)[:, :k]
        rho[rows] = np.sort(nearest, axis=1).mean(axis=1)
    return DensityProfile(rho, k, tuple(int(i) for i in idx), tuple(notes))


def rank_by_distance(dists: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Positions of ``candidates`` ordered by ascending distance, ties to the lower index."""
    return np.lexsort((candidates, dists))


def knn_of_point(pool: FeaturePool, query_index: int, candidate_set: Sequence[int],
                 k: int) -> List[int]:
    """The ``k`` candidates closest to the query sample, nearest first."""
    if k < 0:
        raise ConfigurationError(f"k must be non-negative, got {k}")
    if k == 0:
        return []
    candidates = np.asarray(candidate_set, dtype=np.int64)
    if candidates.size == 0:
        raise DegenerateSubsetError("k-nearest-neighbor query over an empty candidate set")
    if k > candidates.size:
        raise ConfigurationError(f"k={k} exceeds the {candidates.size} available candidates")

    dists = distances(pool.features[[query_index]], pool.features[candidates])[0]
    order = rank_by_distance(dists, candidates)[:k]
    return [int(i) for i in candidates[order]]
