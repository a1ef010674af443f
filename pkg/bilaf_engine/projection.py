"""
2-D projection of a pool for external plotting.

Principal components come from power iteration with deflation on the feature
covariance.  Each component is signed so that its largest-magnitude loading
is positive, which makes the export deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
import pandas as pd

from .errors import ConfigurationError
from .feature_store import FeaturePool

logger = logging.getLogger(__name__)

POWER_TOL = 1e-12
POWER_MAX_ITERS = 5000
VIZ_COLUMNS = ["index", "x", "y", "label", "selected_stage"]


@dataclass(frozen=True)
class Projection:
    mean: np.ndarray
    components: np.ndarray          # (n_components, d), unit rows
    explained_variance: np.ndarray  # (n_components,)
    coords: np.ndarray              # (N, n_components)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    return -v if v[int(np.argmax(np.abs(v)))] < 0 else v


def power_iteration(matrix: np.ndarray, tol: float = POWER_TOL,
                    max_iters: int = POWER_MAX_ITERS) -> tuple:
    """Dominant eigenpair of a symmetric PSD matrix."""
    # start from the column with the largest norm: deterministic and inside the range
    col = int(np.argmax(np.linalg.norm(matrix, axis=0)))
    v = matrix[:, col].astype(np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        e = np.zeros(matrix.shape[0])
        e[0] = 1.0
        return 0.0, e
    v = _fix_sign(v / norm)
    for it in range(max_iters):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        w = _fix_sign(w / norm)
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    else:
        logger.debug("power iteration stopped at max_iters=%d", max_iters)
    return float(v @ matrix @ v), v


def pca(features: np.ndarray, n_components: int = 2) -> Projection:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < n_components:
        raise ConfigurationError(
            f"projection to {n_components} components needs d >= {n_components}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / x.shape[0]

    components, values = [], []
    deflated = cov.copy()
    for _ in range(n_components):
        value, vec = power_iteration(deflated)
        components.append(vec)
        values.append(value)
        deflated = deflated - value * np.outer(vec, vec)
    comps = np.stack(components)
    return Projection(mean, comps, np.asarray(values), centered @ comps.T)


def projection_frame(pool: FeaturePool, stages: Optional[Mapping[int, str]] = None) -> pd.DataFrame:
    """One row per sample: index, x, y, label (-1 if unknown), selected_stage ("" if unpicked)."""
    proj = pca(pool.features, 2)
    stages = stages or {}
    labels = pool.labels if pool.has_labels else np.full(pool.n, -1, dtype=np.int64)
    frame = pd.DataFrame({
        "index": np.arange(pool.n),
        "x": proj.coords[:, 0],
        "y": proj.coords[:, 1],
        "label": labels,
        "selected_stage": [stages.get(i, "") for i in range(pool.n)],
    }, columns=VIZ_COLUMNS)
    logger.info("Projected %d samples (PC variances %.4f, %.4f)", pool.n,
                proj.explained_variance[0], proj.explained_variance[1])
    return frame
