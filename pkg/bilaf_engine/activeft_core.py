"""
Core sample selection
=====================

Optimizes K continuous parameters on the unit sphere so that they match the
feature distribution of the pool while staying mutually diverse, then maps
each parameter to its most similar real feature.  The selected samples serve
as pseudo-class centers for boundary selection.

Loss (features and parameters unit norm, sim = dot product)::

    L = -mean_i sim(f_i, theta_{a(i)}) / tau
        + lambda * mean_j log sum_{k != j} exp(sim(theta_j, theta_k) / tau)

with a(i) = argmax_j sim(f_i, theta_j).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .errors import ConfigurationError, InfeasibleBudgetError, InvariantViolation
from .feature_store import FeaturePool
from .reporting import save_csv
from .seeding import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.07
DEFAULT_LAMBDA = 1.0


@dataclass
class CoreParams:
    """Continuous core parameters theta (K x d) and the loss constants."""

    theta: np.ndarray
    tau: float = DEFAULT_TAU
    lambda_weight: float = DEFAULT_LAMBDA

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 2:
            raise ConfigurationError("theta must be a K x d matrix")
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if self.lambda_weight < 0:
            raise ConfigurationError(f"lambda_weight must be non-negative, got {self.lambda_weight}")

    @property
    def k_cores(self) -> int:
        return int(self.theta.shape[0])


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    max_iters: int = 300
    rel_tol: float = 1e-6
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    # independent starts; the lowest-loss run wins
    restarts: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be a positive integer")
        if self.restarts < 1:
            raise ConfigurationError("restarts must be a positive integer")
        if self.rel_tol < 0:
            raise ConfigurationError("rel_tol must be non-negative")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigurationError("Adam betas must lie strictly between 0 and 1")
        if not self.adam_eps > 0:
            raise ConfigurationError("adam_eps must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class CoreSet:
    """K selected center indices and the parameters that produced them."""

    center_indices: Tuple[int, ...]
    final_theta: np.ndarray = field(compare=False)
    final_loss: float
    loss_trace: Tuple[Tuple[int, float], ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(set(self.center_indices)) != len(self.center_indices):
            raise InvariantViolation("core center indices must be distinct")

    @property
    def k_cores(self) -> int:
        return len(self.center_indices)

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(list(self.loss_trace), columns=["iter", "loss"])

    def write_trace(self, path) -> None:
        save_csv(path, self.trace_frame())


def _check_inputs(pool: FeaturePool, params: CoreParams) -> None:
    if params.k_cores < 2:
        raise ConfigurationError(
            f"the diversity term needs at least 2 core parameters, got K={params.k_cores}")
    if params.theta.shape[1] != pool.dim:
        raise ConfigurationError(
            f"theta has dimension {params.theta.shape[1]} but the pool has {pool.dim}")
    if not pool.normalized:
        raise ConfigurationError("core selection expects a normalized pool")


def _loss_and_grad(features: np.ndarray, theta: np.ndarray, tau: float, lam: float,
                   with_grad: bool = True):
    n = features.shape[0]
    k = theta.shape[0]

    sims = features @ theta.T
    assignment = np.argmax(sims, axis=1)
    matched = sims[np.arange(n), assignment]
    fit_term = -np.mean(matched) / tau

    gram = theta @ theta.T / tau
    np.fill_diagonal(gram, -np.inf)
    row_lse = logsumexp(gram, axis=1)
    diversity_term = np.mean(row_lse)
    loss = float(fit_term + lam * diversity_term)
    if not with_grad:
        return loss, assignment, None

    # assignment is held fixed within the step
    onehot = np.zeros((n, k))
    onehot[np.arange(n), assignment] = 1.0
    grad = -(onehot.T @ features) / (n * tau)

    if lam > 0:
        weights = np.exp(gram - row_lse[:, None]) * (lam / (k * tau))
        grad += (weights + weights.T) @ theta
    return loss, assignment, grad


def activeft_loss(pool: FeaturePool, params: CoreParams) -> Tuple[float, np.ndarray]:
    """Loss value and the hard assignment of every sample to its closest theta row."""
    _check_inputs(pool, params)
    loss, assignment, _ = _loss_and_grad(pool.as_float64(), params.theta, params.tau,
                                         params.lambda_weight, with_grad=False)
    return loss, assignment


def activeft_grad(pool: FeaturePool, params: CoreParams) -> np.ndarray:
    """Analytic gradient of ``activeft_loss`` with respect to theta (K x d)."""
    _check_inputs(pool, params)
    _, _, grad = _loss_and_grad(pool.as_float64(), params.theta, params.tau,
                                params.lambda_weight)
    return grad


class SphereAdam:
    """Adam on matrix parameters whose rows are projected back to the unit sphere."""

    def __init__(self, shape, config: OptimizerConfig):
        self.config = config
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        cfg = self.config
        self.t += 1
        self.m = cfg.adam_beta1 * self.m + (1 - cfg.adam_beta1) * grad
        self.v = cfg.adam_beta2 * self.v + (1 - cfg.adam_beta2) * grad * grad
        m_hat = self.m / (1 - cfg.adam_beta1 ** self.t)
        v_hat = self.v / (1 - cfg.adam_beta2 ** self.t)
        theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        return theta / np.linalg.norm(theta, axis=1, keepdims=True)


def match_to_pool(features: np.ndarray, theta: np.ndarray) -> List[int]:
    """Map every theta row to a distinct pool feature of highest similarity.

    When two rows want the same feature, the row with the higher similarity
    keeps it (ties to the lower row) and the other moves on to its next-best
    unused feature.
    """
    k = theta.shape[0]
    if k > features.shape[0]:
        raise InfeasibleBudgetError(f"cannot match {k} cores to {features.shape[0]} features")
    sims = theta @ features.T
    preference = np.argsort(-sims, axis=1, kind="stable")
    pointer = [0] * k
    owner = {}
    pending = list(range(k))
    while pending:
        j = pending.pop(0)
        while True:
            f = int(preference[j, pointer[j]])
            rival = owner.get(f)
            if rival is None:
                owner[f] = j
                break
            if sims[j, f] > sims[rival, f] or (sims[j, f] == sims[rival, f] and j < rival):
                owner[f] = j
                pointer[rival] += 1
                pending.append(rival)
                break
            pointer[j] += 1
    matched = [0] * k
    for f, j in owner.items():
        matched[j] = f
    return matched


def _optimize(features: np.ndarray, theta: np.ndarray, opt: OptimizerConfig, tau: float,
              lambda_weight: float):
    """One Adam run from ``theta``; returns (best loss, best theta, trace)."""
    adam = SphereAdam(theta.shape, opt)
    loss, _, grad = _loss_and_grad(features, theta, tau, lambda_weight)
    trace = [(0, loss)]
    best_loss, best_theta = loss, theta
    for it in range(1, opt.max_iters + 1):
        theta = adam.step(theta, grad)
        new_loss, _, grad = _loss_and_grad(features, theta, tau, lambda_weight)
        trace.append((it, new_loss))
        if new_loss < best_loss:
            best_loss, best_theta = new_loss, theta
        change = abs(new_loss - loss) / max(1.0, abs(loss))
        loss = new_loss
        if change < opt.rel_tol:
            logger.debug("Core optimization converged at iteration %d", it)
            break
    return best_loss, best_theta, trace


def restart_seed(seed: int, restart: int) -> int:
    """Seed of restart ``restart``; the first run uses ``seed`` itself."""
    return seed if restart == 0 else derive_seed(seed, f"restart:{restart}")


def select_cores(pool: FeaturePool, k_cores: int, opt: Optional[OptimizerConfig] = None,
                 tau: float = DEFAULT_TAU, lambda_weight: float = DEFAULT_LAMBDA) -> CoreSet:
    """Pick ``k_cores`` pseudo-class centers by optimizing the core loss.

    theta starts at K distinct random pool features, then takes Adam steps with
    row re-normalization until ``max_iters`` or the relative loss change drops
    below ``rel_tol``.  With ``restarts > 1`` the run is repeated from fresh
    random starts.  The lowest-loss iterate over all runs is matched to the
    pool, and the trace of that run is kept.

    Two theta rows that start inside the same cluster can stay there: near
    coincidence their repulsion is almost parallel to the rows and the sphere
    projection cancels it.  Restarts are the remedy.
    """
    opt = opt or OptimizerConfig()
    if k_cores > pool.n:
        raise InfeasibleBudgetError(f"K={k_cores} core samples requested from a pool of {pool.n}")
    if k_cores < 2:
        raise ConfigurationError(f"core selection needs K >= 2, got {k_cores}")

    features = pool.as_float64()
    best = None
    for restart in range(opt.restarts):
        rng = np.random.default_rng(restart_seed(opt.seed, restart))
        start = rng.choice(pool.n, size=k_cores, replace=False)
        theta = features[start]
        theta = theta / np.linalg.norm(theta, axis=1, keepdims=True)
        _check_inputs(pool, CoreParams(theta, tau=tau, lambda_weight=lambda_weight))

        run = _optimize(features, theta, opt, tau, lambda_weight)
        logger.debug("Restart %d: loss %.4f -> %.4f", restart, run[2][0][1], run[0])
        if best is None or run[0] < best[0]:
            best = run

    best_loss, best_theta, trace = best
    centers = match_to_pool(features, best_theta)
    logger.info("Selected %d core samples (loss %.4f -> %.4f in %d iterations, %d start(s))",
                k_cores, trace[0][1], best_loss, len(trace) - 1, opt.restarts)
    return CoreSet(tuple(centers), best_theta, best_loss, tuple(trace))


def cores_from_indices(pool: FeaturePool, indices) -> CoreSet:
    """Wrap centers chosen by another selector (K-Means, FDS, random) as a CoreSet."""
    idx = [int(i) for i in indices]
    theta = pool.as_float64()[idx]
    return CoreSet(tuple(idx), theta, float("nan"))
