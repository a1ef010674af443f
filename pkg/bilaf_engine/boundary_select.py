"""
Boundary sample selection
=========================

Per pseudo-class: allocate a share of the budget, take the center first, then
repeatedly pick the live candidate with the lowest boundary score and retire
its neighbourhood (iterative selection and removal).  An opponent penalty
inflates the distance to opponent centers that already received picks, which
spreads picks over different class boundaries.

Boundary score of sample j in pseudo-class i against opponent center l::

    s_l = (delta**t_l * D(f_j, f_cl) - d_intra(j)) / max(D(f_j, f_cl), d_intra(j))
    score = min_l s_l

where d_intra is the mean distance from j to the other members of the
(denoised) pseudo-class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Callable, List, Optional, Sequence, Tuple

import numpy as np

from .activeft_core import CoreSet, cores_from_indices, select_cores
from .baselines import BaselineConfig, select_baseline
from .cluster_geometry import (
    DEFAULT_BLOCK,
    PseudoCluster,
    assign_clusters,
    distances,
    knn_of_point,
    row_blocks,
)
from .denoiser import DenoiseReport, denoise_all
from .errors import ConfigurationError, InfeasibleBudgetError, InvariantViolation
from .feature_store import FeaturePool
from .reporting import save_json, write_index_list
from .seeding import derive_seed

if TYPE_CHECKING:
    from .config import SelectionConfig

logger = logging.getLogger(__name__)


class SelectionCriterion(str, Enum):
    BOUNDARY_SCORE = "bs"
    BASIC_DISTANCE = "bd"

    @classmethod
    def _missing_(cls, value):
        aliases = {"boundary_score": cls.BOUNDARY_SCORE, "basic_distance": cls.BASIC_DISTANCE}
        return aliases.get(str(value).lower())


class SelectionProcess(str, Enum):
    ITERATIVE_REMOVAL = "isr"
    ONE_SHOT = "os"

    @classmethod
    def _missing_(cls, value):
        aliases = {"iterative_removal": cls.ITERATIVE_REMOVAL, "one_shot": cls.ONE_SHOT}
        return aliases.get(str(value).lower())


class PickStage(str, Enum):
    CORE = "core"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class BoundaryConfig:
    opponent_delta: float = 1.1
    criterion: SelectionCriterion = SelectionCriterion.BOUNDARY_SCORE
    process: SelectionProcess = SelectionProcess.ITERATIVE_REMOVAL
    use_opponent_penalty: bool = True
    # d_intra over the denoised set (True) or over the live candidates each round
    freeze_intra: bool = True

    def __post_init__(self):
        object.__setattr__(self, "criterion", SelectionCriterion(self.criterion))
        object.__setattr__(self, "process", SelectionProcess(self.process))
        if not self.opponent_delta >= 1.0:
            raise ConfigurationError(f"opponent_delta must be >= 1, got {self.opponent_delta}")


@dataclass(frozen=True)
class SelectionRecord:
    index: int
    pseudo_class: int
    stage: PickStage
    boundary_score: Optional[float] = None
    opponent_class: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "pseudo_class": self.pseudo_class,
            "stage": self.stage.value,
            "boundary_score": self.boundary_score,
            "opponent_class": self.opponent_class,
        }


@dataclass(frozen=True)
class PickTrace:
    """State in front of one boundary pick, enough to replay it."""

    pseudo_class: int
    index: int
    live: Tuple[int, ...]
    penalties: Tuple[int, ...]
    intra_members: Tuple[int, ...]


@dataclass(frozen=True)
class SelectionResult:
    selected: Tuple[SelectionRecord, ...]
    per_cluster_budget: Tuple[int, ...]
    shortfall: Tuple[int, ...] = ()
    warnings: Tuple[str, ...] = field(default=(), compare=False)
    trace: Tuple[PickTrace, ...] = field(default=(), compare=False)
    core_set: Optional[CoreSet] = field(default=None, compare=False)
    denoise_reports: Tuple[DenoiseReport, ...] = field(default=(), compare=False)
    config: Optional[dict] = field(default=None, compare=False)

    @property
    def indices(self) -> List[int]:
        return [r.index for r in self.selected]

    def to_dict(self) -> dict:
        out = {
            "config": self.config,
            "budget": len(self.selected),
            "per_cluster_budget": list(self.per_cluster_budget),
            "shortfall": list(self.shortfall),
            "warnings": list(self.warnings),
            "selected": [r.to_dict() for r in self.selected],
        }
        if self.core_set is not None:
            out["core_indices"] = list(self.core_set.center_indices)
            out["core_loss"] = self.core_set.final_loss
        return out

    def write_json(self, path) -> None:
        save_json(path, self.to_dict())

    def write_index_list(self, path) -> None:
        write_index_list(path, self.indices)


# -----------------------------------------------------------
# Budget allocation
# -----------------------------------------------------------
def allocate_budgets(cluster_sizes: Sequence[int], total: int) -> List[int]:
    """Split ``total`` proportionally to cluster sizes (largest remainder).

    Every nonempty cluster gets at least one pick (its center) and no cluster
    gets more picks than members.
    """
    sizes = [int(s) for s in cluster_sizes]
    k = len(sizes)
    grand = sum(sizes)
    if grand <= 0:
        raise InfeasibleBudgetError("all pseudo-classes are empty")
    if total < k:
        raise InfeasibleBudgetError(
            f"budget B={total} is smaller than the number of pseudo-classes K={k}; "
            "use fewer core samples")
    if total > grand:
        raise InfeasibleBudgetError(f"budget B={total} exceeds the {grand} candidates left")

    budgets = [total * s // grand for s in sizes]
    leftover = total - sum(budgets)
    remainders = sorted(range(k), key=lambda i: (-(total * sizes[i] % grand), i))
    for i in remainders[:leftover]:
        budgets[i] += 1

    for i in range(k):
        if sizes[i] > 0 and budgets[i] == 0:
            donor = min((j for j in range(k) if budgets[j] > 1), key=lambda j: (-budgets[j], j))
            budgets[donor] -= 1
            budgets[i] = 1

    excess = 0
    for i in range(k):
        if budgets[i] > sizes[i]:
            excess += budgets[i] - sizes[i]
            budgets[i] = sizes[i]
    while excess:
        roomy = sorted((i for i in range(k) if budgets[i] < sizes[i]), key=lambda i: (-sizes[i], i))
        for i in roomy:
            if not excess:
                break
            budgets[i] += 1
            excess -= 1
    return budgets


# -----------------------------------------------------------
# Scores
# -----------------------------------------------------------
def _mean_excluding(row: np.ndarray, pos: int) -> float:
    others = np.delete(row, pos)
    return float(others.sum() / others.size) if others.size else 0.0


def _intra_distances(member_features: np.ndarray, block_size: int = DEFAULT_BLOCK) -> np.ndarray:
    m = member_features.shape[0]
    intra = np.empty(m)
    for rows in row_blocks(m, block_size):
        block = distances(member_features[rows], member_features)
        for r, pos in enumerate(range(rows.start, rows.stop)):
            intra[pos] = _mean_excluding(block[r], pos)
    return intra


def _penalty_factors(penalties: np.ndarray, opponents: np.ndarray, cfg: BoundaryConfig) -> np.ndarray:
    if not cfg.use_opponent_penalty:
        return np.ones(opponents.size)
    return np.power(float(cfg.opponent_delta), penalties[opponents].astype(np.float64))


def _scores(opp_dist: np.ndarray, intra: np.ndarray, factors: np.ndarray,
            cfg: BoundaryConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Per-candidate score and the argmin opponent column (ties to the lower column)."""
    penalized = opp_dist * factors[None, :]
    if cfg.criterion is SelectionCriterion.BASIC_DISTANCE:
        per_opponent = penalized
    else:
        numerator = penalized - intra[:, None]
        denominator = np.maximum(opp_dist, intra[:, None])
        per_opponent = np.divide(numerator, denominator, out=np.zeros_like(numerator),
                                 where=denominator > 0)
    column = np.argmin(per_opponent, axis=1)
    return per_opponent[np.arange(per_opponent.shape[0]), column], column


def boundary_score(pool: FeaturePool, cluster: PseudoCluster, sample: int, centers: CoreSet,
                   penalties: Sequence[int], cfg: BoundaryConfig,
                   intra_members: Optional[Sequence[int]] = None) -> Tuple[float, int]:
    """Score of ``sample`` in ``cluster`` and the opponent center position realizing it.

    ``penalties`` holds t_l for every center position.  d_intra is taken over
    ``intra_members`` (default: the cluster members), excluding the sample.
    """
    if sample not in cluster.member_indices:
        raise ConfigurationError(f"sample {sample} is not in pseudo-class {cluster.position}")
    k = centers.k_cores
    if k < 2:
        raise ConfigurationError("boundary scores need at least one opponent center")
    members = np.asarray(intra_members if intra_members is not None else cluster.member_indices,
                         dtype=np.int64)
    features = pool.features
    own = np.flatnonzero(members == sample)
    if members.size <= 1:
        logger.warning("pseudo-class %d has a single member; d_intra taken as 0", cluster.position)
        intra = 0.0
    else:
        row = distances(features[[sample]], features[members])[0]
        intra = _mean_excluding(row, int(own[0])) if own.size else float(row.mean())

    opponents = np.array([l for l in range(k) if l != cluster.position], dtype=np.int64)
    opp_centers = np.asarray(centers.center_indices, dtype=np.int64)[opponents]
    opp_dist = distances(features[[sample]], features[opp_centers])
    factors = _penalty_factors(np.asarray(penalties, dtype=np.int64), opponents, cfg)
    score, column = _scores(opp_dist, np.array([intra]), factors, cfg)
    return float(score[0]), int(opponents[column[0]])


# -----------------------------------------------------------
# Per-cluster selection
# -----------------------------------------------------------
class _ClusterRun:
    """Live candidate state of one pseudo-class during selection."""

    def __init__(self, pool: FeaturePool, cluster: PseudoCluster, cores: CoreSet,
                 budget: int, cfg: BoundaryConfig):
        self.pool = pool
        self.cluster = cluster
        self.cfg = cfg
        self.budget = budget
        self.members = np.asarray(cluster.member_indices, dtype=np.int64)
        self.position_of = {int(i): p for p, i in enumerate(self.members)}
        self.member_features = pool.features[self.members]
        size = self.members.size
        # frozen at the post-denoise size
        self.removal = max(1, size // budget) if budget > 0 else 1
        self.live = np.ones(size, dtype=bool)
        self.picks = 0
        self.penalties = np.zeros(cores.k_cores, dtype=np.int64)
        self.opponents = np.array([l for l in range(cores.k_cores) if l != cluster.position],
                                  dtype=np.int64)
        opp_centers = np.asarray(cores.center_indices, dtype=np.int64)[self.opponents]
        self.opp_dist = distances(self.member_features, pool.features[opp_centers])
        self.intra = _intra_distances(self.member_features) if size > 1 else np.zeros(size)
        self.center_pos = int(np.flatnonzero(self.members == cluster.center_index)[0]) \
            if size else -1
        self.ranking = None
        if cfg.process is SelectionProcess.ONE_SHOT and size:
            self.ranking = self._one_shot_ranking()

    @property
    def live_count(self) -> int:
        return int(self.live.sum())

    def _one_shot_ranking(self):
        candidates = np.array([p for p in range(self.members.size) if p != self.center_pos],
                              dtype=np.int64)
        factors = _penalty_factors(self.penalties, self.opponents, self.cfg)
        scores, columns = _scores(self.opp_dist[candidates], self.intra[candidates], factors,
                                  self.cfg)
        order = np.lexsort((self.members[candidates], scores))
        return [(int(candidates[o]), float(scores[o]), int(self.opponents[columns[o]]))
                for o in order]

    def _live_intra(self, live_pos: np.ndarray) -> np.ndarray:
        if self.cfg.freeze_intra:
            return self.intra[live_pos]
        if live_pos.size == 1:
            return np.zeros(1)
        return _intra_distances(self.member_features[live_pos])

    def pick_next(self, trace: List[PickTrace]) -> Optional[SelectionRecord]:
        live_pos = np.flatnonzero(self.live)
        if live_pos.size == 0:
            return None
        position = self.cluster.position

        if self.picks == 0 and self.live[self.center_pos]:
            pos = self.center_pos
            record = SelectionRecord(int(self.members[pos]), position, PickStage.CORE)
        elif self.ranking is not None:
            while self.ranking and not self.live[self.ranking[0][0]]:
                self.ranking.pop(0)
            if not self.ranking:
                return None
            pos, score, opponent = self.ranking.pop(0)
            record = SelectionRecord(int(self.members[pos]), position, PickStage.BOUNDARY,
                                     score, opponent)
        else:
            intra = self._live_intra(live_pos)
            factors = _penalty_factors(self.penalties, self.opponents, self.cfg)
            scores, columns = _scores(self.opp_dist[live_pos], intra, factors, self.cfg)
            best = int(np.argmin(scores))
            pos = int(live_pos[best])
            opponent = int(self.opponents[columns[best]])
            live_idx = tuple(int(i) for i in self.members[live_pos])
            trace.append(PickTrace(position, int(self.members[pos]), live_idx,
                                   tuple(int(t) for t in self.penalties),
                                   tuple(int(i) for i in self.members)
                                   if self.cfg.freeze_intra else live_idx))
            self.penalties[opponent] += 1
            record = SelectionRecord(int(self.members[pos]), position, PickStage.BOUNDARY,
                                     float(scores[best]), opponent)

        self._retire(pos, live_pos)
        self.picks += 1
        return record

    def _retire(self, pos: int, live_pos: np.ndarray) -> None:
        self.live[pos] = False
        if self.cfg.process is SelectionProcess.ONE_SHOT or self.removal <= 1:
            return
        others = self.members[live_pos[live_pos != pos]]
        if others.size == 0:
            return
        k = min(self.removal - 1, others.size)
        nearest = knn_of_point(self.pool, int(self.members[pos]), others, k)
        self.live[[self.position_of[i] for i in nearest]] = False


def select_boundary(pool: FeaturePool, clusters: Sequence[PseudoCluster], cores: CoreSet,
                    budgets: Sequence[int], cfg: BoundaryConfig,
                    sink: Optional[Callable[[SelectionRecord], None]] = None) -> SelectionResult:
    """Run selection in every (denoised) pseudo-class and merge the picks.

    Clusters that run out of candidates before meeting their budget hand the
    remainder to clusters that still have candidates, round-robin by
    descending live-candidate count.
    """
    if len(clusters) != len(budgets) or len(clusters) != cores.k_cores:
        raise ConfigurationError("need one budget and one center per pseudo-class")
    if cores.k_cores < 2:
        raise ConfigurationError("boundary selection needs at least two pseudo-classes")

    records: List[SelectionRecord] = []
    trace: List[PickTrace] = []
    notes: List[str] = []
    shortfall = []

    def emit(record: SelectionRecord) -> None:
        records.append(record)
        if sink is not None:
            sink(record)

    runs = [_ClusterRun(pool, c, cores, b, cfg) for c, b in zip(clusters, budgets)]
    for run, budget in zip(runs, budgets):
        for _ in range(budget):
            record = run.pick_next(trace)
            if record is None:
                break
            emit(record)
        missing = budget - run.picks
        shortfall.append(missing)
        if missing:
            notes.append(f"pseudo-class {run.cluster.position} exhausted {missing} picks early")
            logger.warning(notes[-1])

    owed = sum(shortfall)
    while owed:
        open_runs = sorted((r for r in runs if r.live_count > 0),
                           key=lambda r: (-r.live_count, r.cluster.position))
        if not open_runs:
            raise InvariantViolation(
                f"candidate pool exhausted with {owed} of {sum(budgets)} picks outstanding")
        for run in open_runs:
            if not owed:
                break
            record = run.pick_next(trace)
            if record is not None:
                emit(record)
                owed -= 1

    chosen = [r.index for r in records]
    if len(set(chosen)) != len(chosen):
        raise InvariantViolation("selection produced duplicate indices")
    logger.info("Selected %d samples (%d centers, %d boundary)", len(records),
                sum(r.stage is PickStage.CORE for r in records),
                sum(r.stage is PickStage.BOUNDARY for r in records))
    return SelectionResult(tuple(records), tuple(int(b) for b in budgets), tuple(shortfall),
                           tuple(notes), tuple(trace))


# -----------------------------------------------------------
# Full procedure
# -----------------------------------------------------------
def select_core_set(pool: FeaturePool, config: "SelectionConfig") -> CoreSet:
    """Stage 1 with the configured core selector."""
    if config.core_count is None:
        raise ConfigurationError("BiLAF needs a core count K (--cores)")
    if config.core_method == "activeft":
        opt = replace(config.optimizer, seed=derive_seed(config.seed, "activeft"))
        return select_cores(pool, config.core_count, opt, tau=config.tau,
                            lambda_weight=config.lambda_weight)
    baseline = BaselineConfig(method=config.core_method, budget=config.core_count,
                              seed=derive_seed(config.seed, f"core:{config.core_method}"))
    return cores_from_indices(pool, select_baseline(pool, baseline))


def run_bilaf(pool: FeaturePool, config: "SelectionConfig") -> SelectionResult:
    """Core selection, pseudo-class assignment, denoising, budgets, boundary picks."""
    config.validate_for(pool)
    cores = select_core_set(pool, config)
    clusters = assign_clusters(pool, cores)
    reduced, reports = denoise_all(pool, clusters, config.denoise_config())
    budgets = allocate_budgets([c.size for c in reduced], config.budget)
    result = select_boundary(pool, reduced, cores, budgets, config.boundary_config())
    notes = tuple(w for r in reports for w in r.warnings) + result.warnings
    return replace(result, warnings=notes, core_set=cores, denoise_reports=tuple(reports),
                   config=config.to_dict())


def write_denoise_reports(reports: Sequence[DenoiseReport], path) -> None:
    save_json(path, [r.to_dict() for r in reports])
