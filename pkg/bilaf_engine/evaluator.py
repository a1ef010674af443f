"""
Selection evaluator
===================

Desk-scale proxy for finetuning accuracy: the selected samples are labelled
with ground truth, one centroid is fitted per class present in the
selection, and every *non-selected* sample is classified by its nearest
centroid.  The test set is always the pool minus the selection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, recall_score

from .baselines import BaselineConfig, select_baseline
from .boundary_select import run_bilaf
from .cluster_geometry import distances
from .config import SelectionConfig
from .errors import ConfigurationError
from .feature_store import FeaturePool, normalize_rows
from .seeding import derive_seed

logger = logging.getLogger(__name__)

SELECTORS = ("bilaf", "random", "fds", "kmeans")
TRIAL_COLUMNS = ["method", "trial", "accuracy", "coverage", "margin"]


@dataclass(frozen=True)
class EvalReport:
    top1_accuracy: float
    per_class_recall: Tuple[float, ...]
    class_coverage: float
    mean_boundary_margin: float
    n_selected: int
    n_test: int
    classes: Tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "top1_accuracy": self.top1_accuracy,
            "per_class_recall": dict(zip(self.classes, self.per_class_recall)),
            "class_coverage": self.class_coverage,
            "mean_boundary_margin": self.mean_boundary_margin,
            "n_selected": self.n_selected,
            "n_test": self.n_test,
            "test_set": "pool minus selected",
        }


def fit_centroids(pool: FeaturePool, selected: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Class ids present in the selection and their mean features."""
    idx = np.asarray(selected, dtype=np.int64)
    labels = pool.labels[idx]
    features = pool.as_float64()[idx]
    classes = np.unique(labels)
    centroids = np.stack([features[labels == c].mean(axis=0) for c in classes])
    if pool.normalized:
        centroids = normalize_rows(centroids)
    return classes, centroids


def evaluate_selection(pool: FeaturePool, selected: Sequence[int]) -> EvalReport:
    if not pool.has_labels:
        raise ConfigurationError("evaluation needs a pool with ground-truth labels")
    chosen = [int(i) for i in selected]
    if not chosen:
        raise ConfigurationError("evaluation needs a non-empty selection")
    if len(set(chosen)) != len(chosen) or min(chosen) < 0 or max(chosen) >= pool.n:
        raise ConfigurationError("selection must hold distinct indices inside the pool")
    test = np.setdiff1d(np.arange(pool.n), chosen)
    if test.size == 0:
        raise ConfigurationError("selection covers the whole pool; no test samples left")

    classes, centroids = fit_centroids(pool, chosen)
    d = distances(pool.as_float64()[test], centroids)
    predicted = classes[np.argmin(d, axis=1)]
    truth = pool.labels[test]
    all_classes = np.unique(pool.labels)

    recall = recall_score(truth, predicted, labels=all_classes, average=None, zero_division=0)
    if centroids.shape[0] >= 2:
        two = np.partition(d, 1, axis=1)[:, :2]
        margin = float(np.mean(two[:, 1] - two[:, 0]))
    else:
        margin = float("nan")

    report = EvalReport(
        top1_accuracy=float(accuracy_score(truth, predicted)),
        per_class_recall=tuple(float(r) for r in recall),
        class_coverage=float(np.isin(all_classes, classes).mean()),
        mean_boundary_margin=margin,
        n_selected=len(chosen),
        n_test=int(test.size),
        classes=tuple(int(c) for c in all_classes),
    )
    logger.debug("Evaluated %d selected samples: accuracy %.4f, coverage %.2f",
                 report.n_selected, report.top1_accuracy, report.class_coverage)
    return report


def run_selector(pool: FeaturePool, method: str, config: SelectionConfig,
                 seed: Optional[int] = None) -> List[int]:
    """Indices chosen by ``method`` with the budget of ``config``."""
    seed = config.seed if seed is None else seed
    if method == "bilaf":
        return run_bilaf(pool, replace(config, seed=seed)).indices
    if method not in SELECTORS:
        raise ConfigurationError(f"unknown method '{method}' (expected one of {SELECTORS})")
    baseline = BaselineConfig(method=method, budget=config.budget,
                              seed=derive_seed(seed, f"baseline:{method}"))
    return select_baseline(pool, baseline)


def compare_methods(pool: FeaturePool, methods: Sequence[str], trials: int, seed: int,
                    base_config: SelectionConfig) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Run every method ``trials`` times; returns (per-trial rows, mean/std summary).

    Trial t of every method uses the seed derived from ``seed`` and "trial:t",
    so the same method listed twice yields identical rows.
    """
    if trials < 1:
        raise ConfigurationError(f"trials must be positive, got {trials}")
    if not methods:
        raise ConfigurationError("need at least one method to compare")

    rows: List[Dict] = []
    for method in methods:
        for t in range(trials):
            trial_seed = derive_seed(seed, f"trial:{t}")
            report = evaluate_selection(pool, run_selector(pool, method, base_config, trial_seed))
            rows.append({"method": method, "trial": t, "accuracy": report.top1_accuracy,
                         "coverage": report.class_coverage,
                         "margin": report.mean_boundary_margin})
        logger.info("%s: %d trials done", method, trials)

    table = pd.DataFrame(rows, columns=TRIAL_COLUMNS)
    order = list(dict.fromkeys(methods))
    summary = (table.groupby("method", sort=False)["accuracy"]
               .agg(mean=lambda s: float(np.mean(s)), std=lambda s: float(np.std(s)))
               .reindex(order).reset_index())
    return table, summary
