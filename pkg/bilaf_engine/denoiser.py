"""
Pseudo-cluster denoising
========================

Removes the floor(P_rm * N_i) most peripheral members of every pseudo-cluster
before boundary selection.  Three strategies:

* ``idc``            grow the cluster outward from its center in rounds of the
                     densest remaining members; the last-included members go.
* ``density_based``  drop the members with the largest k-NN density distance.
* ``distance_guide`` drop the members farthest from the center.

The center is never removed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from .cluster_geometry import PseudoCluster, density_distance, distances
from .errors import ConfigurationError
from .feature_store import FeaturePool

logger = logging.getLogger(__name__)


class DenoiseStrategy(str, Enum):
    IDC = "idc"
    DENSITY_BASED = "db"
    DISTANCE_GUIDE = "dg"
    NONE = "none"

    @classmethod
    def _missing_(cls, value):
        aliases = {"density_based": cls.DENSITY_BASED, "distance_guide": cls.DISTANCE_GUIDE}
        return aliases.get(str(value).lower())


@dataclass(frozen=True)
class DenoiseConfig:
    strategy: DenoiseStrategy = DenoiseStrategy.IDC
    removal_ratio: float = 0.10
    include_fraction: float = 0.10
    k_neighbors: int = 10

    def __post_init__(self):
        object.__setattr__(self, "strategy", DenoiseStrategy(self.strategy))
        if not 0.0 <= self.removal_ratio < 1.0:
            raise ConfigurationError(f"removal_ratio must lie in [0, 1), got {self.removal_ratio}")
        if not 0.0 < self.include_fraction <= 1.0:
            raise ConfigurationError(
                f"include_fraction must lie in (0, 1], got {self.include_fraction}")
        if self.k_neighbors < 1:
            raise ConfigurationError(f"k_neighbors must be positive, got {self.k_neighbors}")


@dataclass(frozen=True)
class DenoiseReport:
    cluster_position: int
    center_index: int
    kept: Tuple[int, ...]
    removed: Tuple[int, ...]
    inclusion_order: Tuple[int, ...] = ()
    warnings: Tuple[str, ...] = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {
            "pseudo_class": self.cluster_position,
            "center_index": self.center_index,
            "kept": list(self.kept),
            "removed": list(self.removed),
            "inclusion_order": list(self.inclusion_order),
        }


def fraction_count(ratio: float, n: int) -> int:
    """floor(ratio * n), robust to binary representation of decimal ratios."""
    return int(math.floor(ratio * n + 1e-9))


def _report(cluster: PseudoCluster, removed: Sequence[int], order: Sequence[int] = (),
            notes: Sequence[str] = ()) -> DenoiseReport:
    gone = set(removed)
    kept = tuple(i for i in cluster.member_indices if i not in gone)
    return DenoiseReport(cluster.position, cluster.center_index, kept,
                         tuple(int(i) for i in removed), tuple(int(i) for i in order),
                         tuple(notes))


def _remove_by_ranking(cluster: PseudoCluster, members: np.ndarray, scores: np.ndarray,
                       n_remove: int) -> List[int]:
    # largest score first, ties to the lower pool index; the center is skipped
    order = np.lexsort((members, -scores))
    removed = []
    for pos in order:
        if len(removed) == n_remove:
            break
        if members[pos] == cluster.center_index:
            continue
        removed.append(int(members[pos]))
    return removed


def _too_small(cluster: PseudoCluster, cfg: DenoiseConfig):
    if cluster.size >= 2:
        return None
    notes = []
    if cfg.removal_ratio > 0:
        notes.append(f"pseudo-class {cluster.position} has a single member; nothing removed")
        logger.warning(notes[-1])
    return notes


def denoise_idc(pool: FeaturePool, cluster: PseudoCluster, cfg: DenoiseConfig) -> DenoiseReport:
    """Iterative density-based clustering, then drop the last-included members.

    Each round scores every outside member by its mean distance to its
    min(k, |included|) nearest included members and absorbs the
    floor(P_in * N_i) lowest scores; the last round takes what is left.
    """
    notes = _too_small(cluster, cfg)
    if notes is not None:
        return _report(cluster, (), (cluster.center_index,), notes)

    members = np.asarray(cluster.member_indices, dtype=np.int64)
    n_i = members.size
    pair = distances(pool.features[members], pool.features[members])
    center_pos = int(np.flatnonzero(members == cluster.center_index)[0])

    step = max(1, fraction_count(cfg.include_fraction, n_i))
    included = [center_pos]
    outside = np.array([p for p in range(n_i) if p != center_pos], dtype=np.int64)
    rounds = 0
    while outside.size:
        k_eff = min(cfg.k_neighbors, len(included))
        to_included = pair[np.ix_(outside, included)]
        if k_eff < len(included):
            to_included = np.partition(to_included, k_eff - 1, axis=1)[:, :k_eff]
        rho = np.sort(to_included, axis=1).mean(axis=1)
        ranked = np.lexsort((members[outside], rho))
        take = ranked if outside.size <= step else ranked[:step]
        included.extend(int(p) for p in outside[take])
        outside = np.delete(outside, take)
        rounds += 1

    order = members[included]
    n_remove = fraction_count(cfg.removal_ratio, n_i)
    removed = order[n_i - n_remove:] if n_remove else order[:0]
    logger.debug("IDC pseudo-class %d: %d rounds, removed %d of %d",
                 cluster.position, rounds, n_remove, n_i)
    return _report(cluster, removed, order)


def denoise_density(pool: FeaturePool, cluster: PseudoCluster, cfg: DenoiseConfig) -> DenoiseReport:
    """Drop the members with the largest density distance within the cluster."""
    notes = _too_small(cluster, cfg)
    if notes is not None:
        return _report(cluster, (), (), notes)
    members = np.asarray(cluster.member_indices, dtype=np.int64)
    profile = density_distance(pool, members, cfg.k_neighbors)
    n_remove = fraction_count(cfg.removal_ratio, members.size)
    removed = _remove_by_ranking(cluster, members, profile.rho, n_remove)
    return _report(cluster, removed, (), profile.warnings)


def denoise_distance(pool: FeaturePool, cluster: PseudoCluster, cfg: DenoiseConfig) -> DenoiseReport:
    """Drop the members farthest from the center feature."""
    notes = _too_small(cluster, cfg)
    if notes is not None:
        return _report(cluster, (), (), notes)
    members = np.asarray(cluster.member_indices, dtype=np.int64)
    to_center = distances(pool.features[members], pool.features[[cluster.center_index]])[:, 0]
    n_remove = fraction_count(cfg.removal_ratio, members.size)
    removed = _remove_by_ranking(cluster, members, to_center, n_remove)
    return _report(cluster, removed)


def denoise(pool: FeaturePool, cluster: PseudoCluster, cfg: DenoiseConfig) -> DenoiseReport:
    if cfg.strategy is DenoiseStrategy.IDC:
        return denoise_idc(pool, cluster, cfg)
    if cfg.strategy is DenoiseStrategy.DENSITY_BASED:
        return denoise_density(pool, cluster, cfg)
    if cfg.strategy is DenoiseStrategy.DISTANCE_GUIDE:
        return denoise_distance(pool, cluster, cfg)
    return _report(cluster, ())


def denoise_all(pool: FeaturePool, clusters: Sequence[PseudoCluster],
                cfg: DenoiseConfig) -> Tuple[List[PseudoCluster], List[DenoiseReport]]:
    """Denoise every pseudo-cluster; returns the reduced clusters and their reports."""
    reports = [denoise(pool, c, cfg) for c in clusters]
    reduced = [c.restricted(r.kept) for c, r in zip(clusters, reports)]
    total = sum(len(r.removed) for r in reports)
    logger.info("Denoising (%s) removed %d samples across %d pseudo-classes",
                cfg.strategy.value, total, len(clusters))
    return reduced, reports
