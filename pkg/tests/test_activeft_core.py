import numpy as np
import pytest
from scipy.special import logsumexp

from bilaf_engine.activeft_core import (
    CoreParams,
    OptimizerConfig,
    SphereAdam,
    activeft_grad,
    activeft_loss,
    cores_from_indices,
    match_to_pool,
    restart_seed,
    select_cores,
)
from bilaf_engine.errors import ConfigurationError, InfeasibleBudgetError
from bilaf_engine.feature_store import FeaturePool

from conftest import make_pool


def unit_rows(rng, k, d):
    theta = rng.normal(size=(k, d))
    return theta / np.linalg.norm(theta, axis=1, keepdims=True)


def loss_oracle(features, theta, tau, lam):
    f = np.asarray(features, dtype=np.float64)
    fit = np.mean([max(f[i] @ t for t in theta) for i in range(len(f))]) / tau
    div = []
    for j in range(len(theta)):
        div.append(logsumexp([theta[j] @ theta[k] / tau for k in range(len(theta)) if k != j]))
    return -fit + lam * np.mean(div)


class TestLoss:
    def test_orthogonal_single_sample(self):
        pool = FeaturePool(np.array([[1.0, 0.0]]), normalized=True)
        loss, assignment = activeft_loss(pool, CoreParams(np.array([[1.0, 0.0], [0.0, 1.0]]), tau=1.0))
        assert loss == pytest.approx(-1.0)
        assert list(assignment) == [0]

    def test_matches_direct_transcription(self, rng):
        pool = make_pool(rng, 50, 8)
        theta = unit_rows(rng, 4, 8)
        loss, _ = activeft_loss(pool, CoreParams(theta))
        assert loss == pytest.approx(loss_oracle(pool.features, theta, 0.07, 1.0), abs=1e-6)

    def test_row_permutation_invariance(self, rng):
        pool = make_pool(rng, 30, 6)
        theta = unit_rows(rng, 5, 6)
        perm = np.array([3, 0, 4, 1, 2])
        loss_a, assign_a = activeft_loss(pool, CoreParams(theta))
        loss_b, assign_b = activeft_loss(pool, CoreParams(theta[perm]))
        assert loss_a == pytest.approx(loss_b, rel=1e-12)
        np.testing.assert_array_equal(perm[assign_b], assign_a)

    def test_lambda_scales_diversity_term(self, rng):
        pool = make_pool(rng, 20, 4)
        theta = unit_rows(rng, 3, 4)
        base, _ = activeft_loss(pool, CoreParams(theta, lambda_weight=0.0))
        one, _ = activeft_loss(pool, CoreParams(theta, lambda_weight=1.0))
        two, _ = activeft_loss(pool, CoreParams(theta, lambda_weight=2.0))
        assert two - base == pytest.approx(2 * (one - base))

    def test_rejects_single_core(self, rng):
        pool = make_pool(rng, 10, 3)
        with pytest.raises(ConfigurationError):
            activeft_loss(pool, CoreParams(unit_rows(rng, 1, 3)))

    def test_rejects_raw_pool(self, rng):
        pool = FeaturePool(rng.normal(size=(10, 3)))
        with pytest.raises(ConfigurationError):
            activeft_loss(pool, CoreParams(unit_rows(rng, 2, 3)))


class TestGradient:
    @pytest.mark.parametrize("seed", range(5))
    def test_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        pool = make_pool(rng, 50, 8)
        theta = unit_rows(rng, 4, 8)
        analytic = activeft_grad(pool, CoreParams(theta))
        h = 1e-6
        numeric = np.zeros_like(theta)
        for idx in np.ndindex(theta.shape):
            plus, minus = theta.copy(), theta.copy()
            plus[idx] += h
            minus[idx] -= h
            numeric[idx] = (activeft_loss(pool, CoreParams(plus))[0]
                            - activeft_loss(pool, CoreParams(minus))[0]) / (2 * h)
        rel = np.max(np.abs(analytic - numeric)) / np.max(np.abs(numeric))
        assert rel < 1e-3

    def test_unassigned_rows_have_no_fit_gradient(self):
        theta = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        pool = FeaturePool(np.tile(theta[0], (5, 1)), normalized=True)
        grad = activeft_grad(pool, CoreParams(theta, tau=1.0, lambda_weight=0.0))
        np.testing.assert_array_equal(grad[1:], 0.0)
        np.testing.assert_allclose(grad[0], [-1.0, 0.0])

    def test_fit_gradient_scales_with_inverse_tau(self, rng):
        pool = make_pool(rng, 20, 4)
        theta = unit_rows(rng, 3, 4)
        g1 = activeft_grad(pool, CoreParams(theta, tau=1.0, lambda_weight=0.0))
        g2 = activeft_grad(pool, CoreParams(theta, tau=2.0, lambda_weight=0.0))
        np.testing.assert_allclose(g2, g1 / 2)


class TestSphereAdam:
    def test_rows_stay_unit_norm(self, rng):
        pool = make_pool(rng, 40, 6)
        theta = unit_rows(rng, 4, 6)
        adam = SphereAdam(theta.shape, OptimizerConfig(learning_rate=0.05))
        for _ in range(50):
            theta = adam.step(theta, activeft_grad(pool, CoreParams(theta)))
            assert np.max(np.abs(np.linalg.norm(theta, axis=1) - 1)) < 1e-4

    def test_invalid_betas(self):
        with pytest.raises(ConfigurationError):
            OptimizerConfig(adam_beta1=1.0)


class TestMatchToPool:
    def test_contested_feature_goes_to_higher_similarity(self):
        features = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        theta = np.array([[0.8, 0.6], [1.0, 0.0]])
        # both rows prefer feature 0; row 1 is more similar, row 0 moves on
        assert match_to_pool(features, theta) == [1, 0]

    def test_all_distinct(self, rng):
        features = unit_rows(rng, 30, 5)
        theta = np.tile(features[0], (6, 1))
        assert len(set(match_to_pool(features, theta))) == 6


class TestSelectCores:
    def test_full_budget_is_permutation(self, rng):
        pool = make_pool(rng, 8, 4)
        cores = select_cores(pool, 8, OptimizerConfig(max_iters=20))
        assert sorted(cores.center_indices) == list(range(8))

    def test_deterministic(self, small_mixture):
        opt = OptimizerConfig(seed=5, max_iters=40)
        assert select_cores(small_mixture, 6, opt) == select_cores(small_mixture, 6, opt)

    @pytest.mark.parametrize("seed", range(10))
    def test_final_loss_not_above_initial(self, small_mixture, seed):
        cores = select_cores(small_mixture, 6, OptimizerConfig(seed=seed, max_iters=60))
        assert cores.final_loss <= cores.loss_trace[0][1]
        assert np.max(np.abs(np.linalg.norm(cores.final_theta, axis=1) - 1)) < 1e-4

    def test_trace_written(self, tmp_path, small_mixture):
        cores = select_cores(small_mixture, 4, OptimizerConfig(max_iters=10))
        path = tmp_path / "trace.csv"
        cores.write_trace(path)
        assert path.read_text().splitlines()[0] == "iter,loss"
        assert cores.trace_frame()["iter"].iloc[0] == 0

    def test_too_many_cores(self, rng):
        with pytest.raises(InfeasibleBudgetError):
            select_cores(make_pool(rng, 3, 2), 4)

    def test_single_core_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            select_cores(make_pool(rng, 3, 2), 1)

    def test_cores_from_indices(self, small_mixture):
        cores = cores_from_indices(small_mixture, [5, 1, 9])
        assert cores.center_indices == (5, 1, 9)
        assert np.isnan(cores.final_loss)

    def test_restarts_never_worse(self, small_mixture):
        single = select_cores(small_mixture, 4, OptimizerConfig(seed=2, max_iters=40))
        multi = select_cores(small_mixture, 4, OptimizerConfig(seed=2, max_iters=40, restarts=3))
        assert multi.final_loss <= single.final_loss

    def test_first_restart_uses_base_seed(self):
        assert restart_seed(11, 0) == 11
        assert restart_seed(11, 1) != restart_seed(11, 2)

    def test_zero_restarts_rejected(self):
        with pytest.raises(ConfigurationError):
            OptimizerConfig(restarts=0)
