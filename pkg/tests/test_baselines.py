import numpy as np
import pytest

from bilaf_engine.baselines import (
    BaselineConfig,
    kmeans_lloyd,
    nearest_distinct,
    select_baseline,
    select_fds,
    select_kmeans,
    select_random,
)
from bilaf_engine.errors import ConfigurationError, InfeasibleBudgetError

from conftest import line_pool, make_pool


class TestRandom:
    def test_sorted_distinct(self, small_mixture):
        picks = select_random(small_mixture, BaselineConfig("random", 30, seed=4))
        assert picks == sorted(set(picks))
        assert len(picks) == 30

    def test_seeded(self, small_mixture):
        cfg = BaselineConfig("random", 10, seed=4)
        assert select_random(small_mixture, cfg) == select_random(small_mixture, cfg)

    def test_budget_above_pool(self):
        with pytest.raises(InfeasibleBudgetError):
            select_random(line_pool([0, 1]), BaselineConfig("random", 3))


class TestFds:
    def test_pick_order(self):
        picks = select_fds(line_pool([0, 1, 2, 10]), BaselineConfig("fds", 4, fds_anchor=0))
        assert picks == [0, 3, 2, 1]

    def test_anchor_out_of_range(self):
        with pytest.raises(ConfigurationError):
            select_fds(line_pool([0, 1]), BaselineConfig("fds", 1, fds_anchor=5))

    def test_covers_far_points_first(self):
        pool = line_pool([0, 0.1, 0.2, 50, 100])
        assert set(select_fds(pool, BaselineConfig("fds", 3, fds_anchor=0))) == {0, 3, 4}


class TestKMeans:
    def test_full_budget_is_whole_pool(self, rng):
        pool = make_pool(rng, 12, 3)
        assert sorted(select_kmeans(pool, BaselineConfig("kmeans", 12))) == list(range(12))

    @pytest.mark.parametrize("init", ["random", "k-means++"])
    def test_objective_non_increasing(self, small_mixture, init):
        fit = kmeans_lloyd(small_mixture.as_float64(), 6, np.random.default_rng(0), init=init)
        assert np.all(np.diff(fit.objective_trace) <= 1e-9)
        assert fit.centroids.shape == (6, small_mixture.dim)

    def test_separated_groups(self):
        pool = line_pool([0, 0.5, 1, 100, 100.5, 101])
        picks = select_kmeans(pool, BaselineConfig("kmeans", 2, seed=3, kmeans_init="k-means++"))
        assert sorted(picks) == [1, 4]

    def test_nearest_distinct_falls_through(self):
        features = np.array([[0.0], [1.0], [5.0]])
        assert nearest_distinct(features, np.array([[0.2], [0.1]])) == [0, 1]

    def test_unknown_init(self):
        with pytest.raises(ConfigurationError):
            BaselineConfig("kmeans", 2, kmeans_init="forgy")


class TestDispatch:
    @pytest.mark.parametrize("method", ["random", "fds", "kmeans"])
    def test_budget_respected(self, small_mixture, method):
        picks = select_baseline(small_mixture, BaselineConfig(method, 15, seed=2))
        assert len(set(picks)) == 15
        assert all(0 <= i < small_mixture.n for i in picks)

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            BaselineConfig("herding", 3)
