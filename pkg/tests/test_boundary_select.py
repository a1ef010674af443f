import numpy as np
import pytest

from bilaf_engine.activeft_core import OptimizerConfig, cores_from_indices
from bilaf_engine.boundary_select import (
    BoundaryConfig,
    PickStage,
    SelectionCriterion,
    SelectionProcess,
    allocate_budgets,
    boundary_score,
    run_bilaf,
    select_boundary,
)
from bilaf_engine.cluster_geometry import PseudoCluster, assign_clusters
from bilaf_engine.config import SelectionConfig
from bilaf_engine.errors import ConfigurationError, InfeasibleBudgetError
from bilaf_engine.feature_store import FeaturePool

from conftest import line_pool


def plane_pool(points):
    return FeaturePool(np.asarray(points, dtype=np.float32))


# c0, u, w, v, then opponent centers A and B
TRIANGLE = plane_pool([(0, 0), (2, 0.5), (2, -0.5), (0, 1), (5, 0), (0, 5)])
TRIANGLE_CLUSTERS = [PseudoCluster(0, 0, (0, 1, 2, 3)), PseudoCluster(1, 4, (4,)),
                     PseudoCluster(2, 5, (5,))]


def two_segments():
    pool = line_pool([-7, -6, -5, -4, -3, 3, 4, 5, 6, 7])
    cores = cores_from_indices(pool, [2, 7])
    return pool, cores, assign_clusters(pool, cores)


class TestAllocateBudgets:
    @pytest.mark.parametrize("sizes,total,expected", [
        ([7, 7, 7], 10, [4, 3, 3]),
        ([30, 10], 4, [3, 1]),
        ([5, 5, 5, 5], 8, [2, 2, 2, 2]),
        ([100, 1], 2, [1, 1]),
    ])
    def test_examples(self, sizes, total, expected):
        assert allocate_budgets(sizes, total) == expected

    def test_budget_below_cluster_count(self):
        with pytest.raises(InfeasibleBudgetError) as err:
            allocate_budgets([5, 5, 5], 2)
        assert "fewer core samples" in str(err.value)

    def test_budget_above_candidates(self):
        with pytest.raises(InfeasibleBudgetError):
            allocate_budgets([2, 2], 5)

    @pytest.mark.parametrize("seed", range(20))
    def test_bounds_hold(self, seed):
        rng = np.random.default_rng(seed)
        sizes = [int(s) for s in rng.integers(1, 40, size=rng.integers(2, 8))]
        total = int(rng.integers(len(sizes), sum(sizes) + 1))
        budgets = allocate_budgets(sizes, total)
        assert sum(budgets) == total
        assert all(1 <= b <= s for b, s in zip(budgets, sizes))


class TestBoundaryScore:
    def setup_method(self):
        self.pool = line_pool([0, 1, 3])
        self.cores = cores_from_indices(self.pool, [0, 2])
        self.cluster = PseudoCluster(0, 0, (0, 1))

    def test_hand_value(self):
        score, opponent = boundary_score(self.pool, self.cluster, 1, self.cores, [0, 0],
                                         BoundaryConfig())
        assert score == pytest.approx(0.5)
        assert opponent == 1

    def test_penalty_raises_score(self):
        score, _ = boundary_score(self.pool, self.cluster, 1, self.cores, [0, 2],
                                  BoundaryConfig(opponent_delta=1.1))
        assert score == pytest.approx(0.71)

    def test_penalty_ignored_when_disabled(self):
        score, _ = boundary_score(self.pool, self.cluster, 1, self.cores, [0, 2],
                                  BoundaryConfig(use_opponent_penalty=False))
        assert score == pytest.approx(0.5)

    def test_basic_distance(self):
        score, _ = boundary_score(self.pool, self.cluster, 1, self.cores, [0, 0],
                                  BoundaryConfig(criterion="bd"))
        assert score == pytest.approx(2.0)

    def test_zero_over_zero_is_zero(self):
        pool = line_pool([0, 0])
        cores = cores_from_indices(pool, [0, 1])
        score, _ = boundary_score(pool, PseudoCluster(0, 0, (0,)), 0, cores, [0, 0],
                                  BoundaryConfig())
        assert score == 0.0

    def test_penalty_switches_opponent(self):
        pool = plane_pool([(0, 0), (1, 1), (6, 0), (0, 6)])
        cores = cores_from_indices(pool, [0, 2, 3])
        cluster = PseudoCluster(0, 0, (0, 1))
        _, tie = boundary_score(pool, cluster, 1, cores, [0, 0, 0], BoundaryConfig())
        _, shifted = boundary_score(pool, cluster, 1, cores, [0, 1, 0], BoundaryConfig())
        assert (tie, shifted) == (1, 2)

    def test_score_bounded(self, small_mixture):
        cores = cores_from_indices(small_mixture, [0, 40, 80, 120])
        clusters = assign_clusters(small_mixture, cores)
        for sample in clusters[1].member_indices[:10]:
            score, _ = boundary_score(small_mixture, clusters[1], sample, cores, [0] * 4,
                                      BoundaryConfig())
            assert -1.0 <= score <= 1.0

    def test_sample_outside_cluster(self):
        with pytest.raises(ConfigurationError):
            boundary_score(self.pool, self.cluster, 2, self.cores, [0, 0], BoundaryConfig())


class TestSelectBoundary:
    def test_two_segments_order(self):
        pool, cores, clusters = two_segments()
        result = select_boundary(pool, clusters, cores, [2, 2], BoundaryConfig())
        assert result.indices == [2, 4, 7, 5]
        assert [r.stage for r in result.selected] == [PickStage.CORE, PickStage.BOUNDARY] * 2
        assert result.selected[1].opponent_class == 1
        assert result.shortfall == (0, 0)

    def test_opponent_penalty_spreads_boundaries(self):
        cores = cores_from_indices(TRIANGLE, [0, 4, 5])
        result = select_boundary(TRIANGLE, TRIANGLE_CLUSTERS, cores, [3, 1, 1],
                                 BoundaryConfig(opponent_delta=1.2))
        assert result.indices == [0, 2, 3, 4, 5]
        assert [r.opponent_class for r in result.selected[1:3]] == [1, 2]

    def test_without_penalty_same_boundary_twice(self):
        cores = cores_from_indices(TRIANGLE, [0, 4, 5])
        result = select_boundary(TRIANGLE, TRIANGLE_CLUSTERS, cores, [3, 1, 1],
                                 BoundaryConfig(opponent_delta=1.2, use_opponent_penalty=False))
        assert result.indices == [0, 2, 1, 4, 5]

    def test_one_shot_keeps_initial_ranking(self):
        cores = cores_from_indices(TRIANGLE, [0, 4, 5])
        result = select_boundary(TRIANGLE, TRIANGLE_CLUSTERS, cores, [3, 1, 1],
                                 BoundaryConfig(opponent_delta=1.2, process="os"))
        assert result.indices == [0, 2, 1, 4, 5]

    def test_shortfall_redistributed(self):
        pool = line_pool([0, 1, 10, 11, 12])
        cores = cores_from_indices(pool, [0, 2])
        clusters = assign_clusters(pool, cores)
        result = select_boundary(pool, clusters, cores, [3, 2], BoundaryConfig())
        assert result.shortfall == (1, 0)
        assert sorted(result.indices) == [0, 1, 2, 3, 4]
        assert len(result.warnings) == 1

    def test_sink_receives_every_pick(self):
        pool, cores, clusters = two_segments()
        seen = []
        result = select_boundary(pool, clusters, cores, [2, 2], BoundaryConfig(), sink=seen.append)
        assert seen == list(result.selected)

    def test_mismatched_budgets(self):
        pool, cores, clusters = two_segments()
        with pytest.raises(ConfigurationError):
            select_boundary(pool, clusters, cores, [4], BoundaryConfig())

    def test_refreshed_intra_changes_pick(self):
        # center at 0, candidates at -3 and 0.5, opponent center at 10
        pool = line_pool([0, -3, 0.5, 10])
        cores = cores_from_indices(pool, [0, 3])
        clusters = [PseudoCluster(0, 0, (0, 1, 2)), PseudoCluster(1, 3, (3,))]
        frozen = select_boundary(pool, clusters, cores, [2, 1], BoundaryConfig())
        refreshed = select_boundary(pool, clusters, cores, [2, 1],
                                    BoundaryConfig(freeze_intra=False))
        assert frozen.indices == [0, 1, 3]
        assert frozen.selected[1].boundary_score == pytest.approx(0.75)
        assert refreshed.indices == [0, 2, 3]
        assert refreshed.selected[1].boundary_score == pytest.approx(6 / 9.5)
        assert refreshed.trace[0].intra_members == (1, 2)

    def test_scaling_raw_pool_keeps_picks(self):
        points = np.random.default_rng(4).normal(size=(50, 3))
        runs = []
        for scale in (1.0, 4.0):
            pool = FeaturePool((points * scale).astype(np.float32))
            cores = cores_from_indices(pool, [5, 17, 33])
            clusters = assign_clusters(pool, cores)
            budgets = allocate_budgets([c.size for c in clusters], 12)
            runs.append(select_boundary(pool, clusters, cores, budgets, BoundaryConfig()))
        assert runs[0].indices == runs[1].indices
        scores = [[r.boundary_score for r in run.selected if r.stage is PickStage.BOUNDARY]
                  for run in runs]
        np.testing.assert_allclose(scores[1], scores[0], rtol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_removal_accounting(self, seed):
        pool = plane_pool(np.random.default_rng(seed).normal(size=(60, 2)))
        cores = cores_from_indices(pool, [0, 1, 2])
        clusters = assign_clusters(pool, cores)
        budgets = allocate_budgets([c.size for c in clusters], 9)
        result = select_boundary(pool, clusters, cores, budgets, BoundaryConfig())
        for cluster, budget in zip(clusters, budgets):
            removal = max(1, cluster.size // budget)
            # the center pick retires its neighbourhood too
            live = cluster.size - min(removal, cluster.size)
            for step in (s for s in result.trace if s.pseudo_class == cluster.position):
                assert len(step.live) == live
                live -= min(removal, live)


@pytest.fixture(scope="module")
def config():
    return SelectionConfig(budget=24, core_count=6, optimizer=OptimizerConfig(max_iters=60), seed=9)


class TestRunBilaf:

    def test_budget_and_distinct(self, small_mixture, config):
        result = run_bilaf(small_mixture, config)
        assert len(result.indices) == 24
        assert len(set(result.indices)) == 24
        assert all(0 <= i < small_mixture.n for i in result.indices)

    def test_centers_selected(self, small_mixture, config):
        result = run_bilaf(small_mixture, config)
        cores = [r.index for r in result.selected if r.stage is PickStage.CORE]
        assert sorted(cores) == sorted(result.core_set.center_indices)

    def test_deterministic(self, small_mixture, config):
        assert run_bilaf(small_mixture, config).indices == run_bilaf(small_mixture, config).indices

    @pytest.mark.parametrize("freeze_intra", [True, False])
    def test_trace_replays(self, small_mixture, config, freeze_intra):
        result = run_bilaf(small_mixture, config.merged({"freeze_intra": freeze_intra}))
        clusters = {r.cluster_position: PseudoCluster(r.cluster_position, r.center_index, r.kept)
                    for r in result.denoise_reports}
        records = {r.index: r for r in result.selected}
        cfg = BoundaryConfig()
        assert result.trace
        for step in result.trace:
            if not freeze_intra:
                assert step.intra_members == step.live
            scores = [boundary_score(small_mixture, clusters[step.pseudo_class], c,
                                     result.core_set, step.penalties, cfg,
                                     intra_members=step.intra_members)[0]
                      for c in step.live]
            assert step.live[int(np.argmin(scores))] == step.index
            assert records[step.index].boundary_score == pytest.approx(min(scores), abs=1e-12)

    @pytest.mark.parametrize("criterion", list(SelectionCriterion))
    @pytest.mark.parametrize("process", list(SelectionProcess))
    def test_variants_fill_budget(self, small_mixture, criterion, process):
        config = SelectionConfig(budget=20, core_count=5, criterion=criterion, process=process,
                                 core_method="kmeans", seed=1)
        assert len(set(run_bilaf(small_mixture, config).indices)) == 20

    def test_budget_above_pool(self, small_mixture):
        with pytest.raises(InfeasibleBudgetError):
            run_bilaf(small_mixture, SelectionConfig(budget=500, core_count=4))

    def test_to_dict(self, small_mixture, config):
        payload = run_bilaf(small_mixture, config).to_dict()
        assert payload["budget"] == 24
        assert payload["config"]["denoise"] == "idc"
        assert len(payload["core_indices"]) == 6
