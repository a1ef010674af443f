"""
Comparison selectors over the same pool interface: Random, FDS
(k-center-greedy) and K-Means (nearest sample to each Lloyd centroid).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .cluster_geometry import DEFAULT_BLOCK, distances, row_blocks
from .errors import ConfigurationError, InfeasibleBudgetError
from .feature_store import FeaturePool

logger = logging.getLogger(__name__)

METHODS = ("random", "fds", "kmeans")


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "random"
    budget: int = 1
    seed: int = 0
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6
    kmeans_init: str = "random"
    # pins the first FDS pick instead of drawing it
    fds_anchor: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown baseline '{self.method}' (expected one of {METHODS})")
        if self.budget < 1:
            raise ConfigurationError(f"budget must be positive, got {self.budget}")
        if self.kmeans_max_iters < 1 or self.kmeans_tol < 0:
            raise ConfigurationError("kmeans_max_iters must be positive and kmeans_tol non-negative")
        if self.kmeans_init not in ("random", "k-means++"):
            raise ConfigurationError(f"unknown kmeans_init '{self.kmeans_init}'")


def _check_budget(pool: FeaturePool, cfg: BaselineConfig) -> None:
    if cfg.budget > pool.n:
        raise InfeasibleBudgetError(f"budget B={cfg.budget} exceeds pool size N={pool.n}")


def select_random(pool: FeaturePool, cfg: BaselineConfig) -> List[int]:
    """B distinct uniformly drawn indices, ascending."""
    _check_budget(pool, cfg)
    rng = np.random.default_rng(cfg.seed)
    return sorted(int(i) for i in rng.choice(pool.n, size=cfg.budget, replace=False))


def select_fds(pool: FeaturePool, cfg: BaselineConfig) -> List[int]:
    """Farthest-distance sampling, in pick order.

    Each step takes the unselected sample whose distance to its nearest
    selected sample is largest (ties to the lower index).
    """
    _check_budget(pool, cfg)
    rng = np.random.default_rng(cfg.seed)
    first = int(rng.integers(pool.n)) if cfg.fds_anchor is None else int(cfg.fds_anchor)
    if not 0 <= first < pool.n:
        raise ConfigurationError(f"fds_anchor {first} outside [0, {pool.n})")

    features = pool.as_float64()
    selected = [first]
    min_dist = distances(features, features[[first]])[:, 0]
    min_dist[first] = -np.inf
    for _ in range(cfg.budget - 1):
        pick = int(np.argmax(min_dist))
        selected.append(pick)
        min_dist = np.minimum(min_dist, distances(features, features[[pick]])[:, 0])
        min_dist[selected] = -np.inf
    return selected


@dataclass(frozen=True)
class KMeansFit:
    centroids: np.ndarray
    labels: np.ndarray
    objective_trace: Tuple[float, ...]
    n_iter: int


def _assign(features: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    labels = np.empty(features.shape[0], dtype=np.int64)
    nearest = np.empty(features.shape[0])
    for rows in row_blocks(features.shape[0], DEFAULT_BLOCK):
        d = distances(features[rows], centroids)
        labels[rows] = np.argmin(d, axis=1)
        nearest[rows] = d[np.arange(d.shape[0]), labels[rows]]
    return labels, nearest


def _init_centroids(features: np.ndarray, k: int, rng: np.random.Generator, init: str) -> np.ndarray:
    if init == "random":
        return features[rng.choice(features.shape[0], size=k, replace=False)].copy()
    chosen = [int(rng.integers(features.shape[0]))]
    closest = distances(features, features[chosen])[:, 0] ** 2
    for _ in range(k - 1):
        total = closest.sum()
        if total > 0:
            pick = int(rng.choice(features.shape[0], p=closest / total))
        else:
            pick = int(np.flatnonzero(~np.isin(np.arange(features.shape[0]), chosen))[0])
        chosen.append(pick)
        closest = np.minimum(closest, distances(features, features[[pick]])[:, 0] ** 2)
    return features[chosen].copy()


def kmeans_lloyd(features: np.ndarray, k: int, rng: np.random.Generator, max_iters: int = 100,
                 tol: float = 1e-6, init: str = "random") -> KMeansFit:
    """Lloyd's iterations; empty clusters are re-seeded at the worst-served point.

    The objective (within-cluster sum of squares) is recorded after every
    assignment step and never increases.
    """
    features = np.asarray(features, dtype=np.float64)
    centroids = _init_centroids(features, k, rng, init)
    trace = []
    labels = None
    it = 0
    for it in range(1, max_iters + 1):
        labels, nearest = _assign(features, centroids)
        trace.append(float(np.sum(nearest ** 2)))

        updated = centroids.copy()
        reseeded = set()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                updated[j] = features[labels == j].mean(axis=0)
        for j in np.flatnonzero(counts == 0):
            # worst-served point not already used for another empty cluster
            for p in np.argsort(-nearest, kind="stable"):
                if int(p) not in reseeded:
                    reseeded.add(int(p))
                    updated[j] = features[p]
                    break
        shift = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        if shift < tol:
            break
    labels, nearest = _assign(features, centroids)
    trace.append(float(np.sum(nearest ** 2)))
    return KMeansFit(centroids, labels, tuple(trace), it)


def nearest_distinct(features: np.ndarray, centroids: np.ndarray) -> List[int]:
    """Nearest pool index per centroid; duplicates fall through to the next-nearest unused."""
    used = set()
    picks = []
    for c in centroids:
        d = distances(features, c[None, :])[:, 0]
        for p in np.lexsort((np.arange(d.size), d)):
            if int(p) not in used:
                used.add(int(p))
                picks.append(int(p))
                break
    return picks


def select_kmeans(pool: FeaturePool, cfg: BaselineConfig) -> List[int]:
    """Sample nearest to each of B K-Means centroids."""
    _check_budget(pool, cfg)
    rng = np.random.default_rng(cfg.seed)
    features = pool.as_float64()
    fit = kmeans_lloyd(features, cfg.budget, rng, cfg.kmeans_max_iters, cfg.kmeans_tol,
                       cfg.kmeans_init)
    logger.debug("K-Means converged in %d iterations (objective %.4f)",
                 fit.n_iter, fit.objective_trace[-1])
    return nearest_distinct(features, fit.centroids)


def select_baseline(pool: FeaturePool, cfg: BaselineConfig) -> List[int]:
    if cfg.method == "random":
        picks = select_random(pool, cfg)
    elif cfg.method == "fds":
        picks = select_fds(pool, cfg)
    else:
        picks = select_kmeans(pool, cfg)
    logger.info("Baseline %s selected %d samples", cfg.method, len(picks))
    return picks
