import math
import warnings

import numpy as np
import pytest
from scipy.spatial.distance import pdist
from sklearn.exceptions import ConvergenceWarning
from sklearn.tree import DecisionTreeRegressor

from hetcd.core import TrainingSet
from hetcd.regression import (
    MSVR,
    GPRegressor,
    HPTRegressor,
    KernelMemoryError,
    RandomForest,
    make_regressor,
    regress_both_ways,
)
from hetcd.regression.gpr import (
    log_marginal_likelihood,
    median_length_scale,
    optimize_gpr_hyperparameters,
)
from hetcd.regression.hpt import kernel_weights
from hetcd.regression.svr import fit_svr, rbf_kernel, svr_cost

KINDS = ["gpr", "svr", "rfr", "hpt"]


def _smooth_data(rng, m=200, p=3, q=2, noise=0.05):
    X = rng.uniform(-1, 1, size=(m, p))
    Y = np.column_stack([np.sin(2 * X[:, 0]) + X[:, 1], X[:, 2] ** 2 - X[:, 0]])[:, :q]
    return X, Y + noise * rng.normal(size=Y.shape)


class TestSharedContract:
    @pytest.mark.parametrize("kind", KINDS)
    def test_single_sample_fit(self, kind):
        model = make_regressor(kind).fit([[0.3, 0.1]], [[2.0, -1.0]])
        np.testing.assert_allclose(model.predict([[0.3, 0.1]]), [[2.0, -1.0]], atol=1e-5)

    @pytest.mark.parametrize("kind", KINDS)
    def test_feature_count_mismatch(self, kind, rng):
        X, Y = _smooth_data(rng, m=30)
        model = make_regressor(kind).fit(X, Y)
        with pytest.raises(ValueError, match="features"):
            model.predict(X[:, :2])

    @pytest.mark.parametrize("kind", KINDS)
    def test_deterministic(self, kind, rng):
        X, Y = _smooth_data(rng, m=80)
        Xq = rng.uniform(-1, 1, size=(50, 3))
        a = make_regressor(kind).fit(X, Y).predict(Xq)
        b = make_regressor(kind).fit(X, Y).predict(Xq)
        assert a.tobytes() == b.tobytes()

    @pytest.mark.parametrize("kind", KINDS)
    def test_learns_smooth_map(self, kind, rng):
        X, Y = _smooth_data(rng, m=400)
        Xq, Yq = _smooth_data(rng, m=200, noise=0.0)
        pred = make_regressor(kind).fit(X, Y).predict(Xq)
        assert np.mean((pred - Yq) ** 2) < 0.1 * np.var(Yq)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown regressor kind"):
            make_regressor("lasso")

    @pytest.mark.parametrize("kind", ["gpr", "svr"])
    def test_memory_budget(self, kind, rng):
        X = rng.normal(size=(101, 2))
        with pytest.raises(KernelMemoryError, match="kernel matrix exceeds memory budget"):
            make_regressor(kind, max_samples=100).fit(X, X)


class TestGPR:
    def test_three_point_posterior_matches_dense_solve(self):
        x = np.array([[-1.0], [0.2], [1.5]])
        y = np.array([[0.5], [-0.3], [1.1]])
        sf2, ell, jitter = 1.7, 0.8, 1e-6
        model = GPRegressor(sf2, ell, jitter, optimizer_steps=0, standardize=False).fit(x, y)
        xq = np.array([[-0.4], [0.9], [3.0]])

        def k(a, b):
            return sf2 * math.exp(-0.5 * (a - b) ** 2 / ell ** 2)

        K = np.array([[k(a, b) for b in x[:, 0]] for a in x[:, 0]]) + sf2 * jitter * np.eye(3)
        Ks = np.array([[k(a, b) for b in x[:, 0]] for a in xq[:, 0]])
        expected = Ks @ np.linalg.solve(K, y)
        np.testing.assert_allclose(model.predict(xq), expected, rtol=0, atol=1e-9)

    def test_gradient_matches_finite_differences(self, rng):
        X = rng.normal(size=(25, 2))
        Y = np.column_stack([np.sin(X[:, 0]), X[:, 1] * X[:, 0]])
        for _ in range(5):
            theta = rng.uniform(-1.0, 1.0, size=2)
            _, grad = log_marginal_likelihood(X, Y, theta, eval_gradient=True)
            fd = np.empty(2)
            for i in range(2):
                e = np.zeros(2)
                e[i] = 1e-5
                fd[i] = (log_marginal_likelihood(X, Y, theta + e)
                         - log_marginal_likelihood(X, Y, theta - e)) / 2e-5
            np.testing.assert_allclose(grad, fd, rtol=1e-5)

    def test_zero_steps_keeps_theta(self, rng):
        X = rng.normal(size=(10, 2))
        assert optimize_gpr_hyperparameters(X, X, (1.3, 0.7), steps=0) == (1.3, 0.7)

    def test_one_step_does_not_decrease_likelihood(self, rng):
        X = rng.uniform(-2, 2, size=(40, 1))
        d2 = (X - X.T) ** 2
        K = np.exp(-0.5 * d2 / 0.5 ** 2) + 1e-8 * np.eye(40)
        Y = np.linalg.cholesky(K) @ rng.normal(size=(40, 1))
        start = np.log([1.0, 1.0])
        for steps in (1, 3):
            theta = np.log(optimize_gpr_hyperparameters(X, Y, (1.0, 1.0), steps=steps))
            assert log_marginal_likelihood(X, Y, theta) >= log_marginal_likelihood(X, Y, start)

    def test_interpolates_with_tiny_jitter(self, rng):
        X = rng.uniform(-1, 1, size=(8, 2))
        Y = rng.normal(size=(8, 2))
        model = GPRegressor(jitter=1e-10, optimizer_steps=0).fit(X, Y)
        np.testing.assert_allclose(model.predict(X), Y, atol=1e-6)

    def test_duplicate_inputs_escalate_jitter(self):
        X = np.array([[0.0], [0.0], [1.0]])
        model = GPRegressor(jitter=0.0, optimizer_steps=0, standardize=False).fit(X, [1.0, 1.0, 2.0])
        assert 0 < model.jitter_ <= 1e-2


    def test_median_length_scale_matches_pdist(self, rng):
        X = rng.normal(size=(50, 3))
        assert median_length_scale(X) == pytest.approx(np.median(pdist(X)), rel=1e-12)

    def test_median_length_scale_subsamples_evenly(self, rng):
        X = rng.normal(size=(2500, 2))
        assert median_length_scale(X, max_points=1000) == pytest.approx(
            np.median(pdist(X[::3])), rel=1e-12)

    def test_median_length_scale_degenerate(self):
        assert median_length_scale(np.zeros((5, 2))) == 1.0
        assert median_length_scale(np.ones((1, 2))) == 1.0

    def test_default_start_is_median_of_standardized_inputs(self, rng):
        X, Y = _smooth_data(rng, m=60)
        model = GPRegressor(optimizer_steps=0).fit(X, Y)
        Xs = (X - X.mean(0)) / X.std(0)
        assert model.length_scale_ == pytest.approx(np.median(pdist(Xs)), rel=1e-9)

    @pytest.mark.parametrize("ell", ["mean", -1.0, 0.0])
    def test_bad_length_scale(self, rng, ell):
        X, Y = _smooth_data(rng, m=20)
        with pytest.raises(ValueError):
            GPRegressor(length_scale=ell).fit(X, Y)


class TestSVR:
    def test_constant_targets_zero_cost(self, rng):
        X = rng.normal(size=(30, 2))
        beta, b, costs, converged = fit_svr(rbf_kernel(X, X, 1.0), np.full((30, 2), 3.5))
        assert converged and costs[-1] == 0.0
        assert np.all(beta == 0) and np.all(b == 3.5)

    def test_cost_monotone(self, rng):
        X, Y = _smooth_data(rng, m=150, noise=0.3)
        model = MSVR().fit(X, Y)
        assert np.all(np.diff(model.cost_history_) <= 0)

    def test_beats_random_search(self, rng):
        X = rng.normal(size=(5, 1))
        Y = rng.normal(size=(5, 1))
        K = rbf_kernel(X, X, 1.0)
        beta, b, costs, _ = fit_svr(K, Y, penalty=1.0, epsilon=0.1)
        best = svr_cost(beta, b, K, Y, 1.0, 0.1)
        assert best == pytest.approx(costs[-1])
        for _ in range(10_000):
            rb = rng.normal(0, 1.0, size=(5, 1))
            rc = rng.normal(Y.mean(), 1.0, size=1)
            assert best <= svr_cost(rb, rc, K, Y, 1.0, 0.1) + 1e-12

    def test_wide_tube_reproduces_targets(self, rng):
        X = rng.normal(size=(40, 2))
        Y = X @ np.array([[0.2], [-0.1]]) + 1.0
        eps = 10.0
        model = MSVR(epsilon=eps, standardize=False).fit(X, Y)
        assert model.cost_history_[-1] == 0.0
        assert np.all(np.abs(model.predict(X) - Y) < eps)

    def test_support_set_is_residual_above_epsilon(self, rng):
        X, Y = _smooth_data(rng, m=120, noise=0.2)
        model = MSVR().fit(X, Y)
        resid = (Y - model.predict(X)) / model.y_scale_
        u = np.sqrt(np.sum(resid ** 2, axis=1))
        np.testing.assert_array_equal(model.support_, np.flatnonzero(u >= model.epsilon))

    def test_nonconvergence_warns(self, rng):
        X, Y = _smooth_data(rng, m=100, noise=0.3)
        with pytest.warns(ConvergenceWarning):
            model = MSVR(max_iter=1).fit(X, Y)
        assert not model.converged_


class TestRandomForest:
    def test_constant_targets(self, rng):
        X = rng.normal(size=(50, 3))
        model = RandomForest(n_estimators=8).fit(X, np.full((50, 2), 4.25))
        assert np.all(model.predict(rng.normal(size=(20, 3))) == 4.25)

    def test_single_full_tree_memorizes(self, rng):
        X = rng.normal(size=(60, 3))
        Y = rng.normal(size=(60, 2))
        model = RandomForest(1, max_features="all", bootstrap=False).fit(X, Y)
        np.testing.assert_array_equal(model.predict(X), Y)

    def test_single_tree_matches_reference_builder(self, rng):
        # one feature, so no two candidate splits tie across features (at
        # small nodes every feature splits perfectly and builders differ)
        X = rng.normal(size=(200, 1))
        Y = np.column_stack([np.sin(3 * X[:, 0]), X[:, 0] ** 2]) + 0.1 * rng.normal(size=(200, 2))
        Xq = rng.normal(size=(500, 1))
        ours = RandomForest(1, max_features="all", bootstrap=False).fit(X, Y).predict(Xq)
        ref = DecisionTreeRegressor(random_state=0).fit(X, Y).predict(Xq)
        np.testing.assert_allclose(ours, ref, rtol=0, atol=1e-12)

    def test_predictions_within_target_range(self, rng):
        X, Y = _smooth_data(rng, m=150, noise=0.2)
        pred = RandomForest(16, random_state=4).fit(X, Y).predict(rng.uniform(-3, 3, size=(300, 3)))
        assert np.all(pred >= Y.min(axis=0) - 1e-12)
        assert np.all(pred <= Y.max(axis=0) + 1e-12)

    def test_fixed_seed_identical_trees(self, rng):
        X, Y = _smooth_data(rng, m=100)
        a = RandomForest(8, random_state=7).fit(X, Y)
        b = RandomForest(8, random_state=7).fit(X, Y)
        for name in ("node_feature_", "node_threshold_", "node_left_", "node_value_"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()

    def test_different_seeds_differ(self, rng):
        X, Y = _smooth_data(rng, m=100)
        a = RandomForest(4, random_state=1).fit(X, Y)
        b = RandomForest(4, random_state=2).fit(X, Y)
        assert a.node_threshold_.tobytes() != b.node_threshold_.tobytes()

    def test_features_per_node(self):
        assert RandomForest().fit(np.eye(7), np.eye(7)).max_features_ == 2
        assert RandomForest().fit(np.eye(2), np.eye(2)).max_features_ == 1

    def test_min_leaf_respected(self, rng):
        X, Y = _smooth_data(rng, m=120)
        model = RandomForest(1, max_features="all", bootstrap=False, min_samples_leaf=5).fit(X, Y)
        # count training samples per leaf via single-tree prediction paths
        leaves = {}
        for row in X:
            node = 0
            while model.node_feature_[node] >= 0:
                f = model.node_feature_[node]
                node = model.node_left_[node] if row[f] <= model.node_threshold_[node] else model.node_right_[node]
            leaves[node] = leaves.get(node, 0) + 1
        assert min(leaves.values()) >= 5

    def test_oob_error_saturates(self):
        better = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            X, Y = _smooth_data(rng, m=300, noise=0.2)
            e8 = RandomForest(8, random_state=seed, oob_score=True).fit(X, Y).oob_error_
            e64 = RandomForest(64, random_state=seed, oob_score=True).fit(X, Y).oob_error_
            better += e64 <= e8
        assert better >= 9


class TestHPT:
    def test_k1_nearest_target(self, rng):
        X = rng.normal(size=(100, 3))
        Y = rng.normal(size=(100, 2))
        Xq = rng.normal(size=(40, 3))
        model = HPTRegressor(n_neighbors=1).fit(X, Y)
        Xs = (X - model.x_mean_) / model.x_scale_
        Qs = (Xq - model.x_mean_) / model.x_scale_
        nearest = [np.argmin(np.sum((Xs - q) ** 2, axis=1)) for q in Qs]
        np.testing.assert_array_equal(model.predict(Xq), Y[nearest])

    def test_gamma_zero_is_neighbor_mean(self, rng):
        X = rng.normal(size=(60, 2))
        Y = rng.normal(size=(60, 3))
        Xq = rng.normal(size=(25, 2))
        model = HPTRegressor(n_neighbors=5, gamma=0.0, standardize=False).fit(X, Y)
        expected = np.array([Y[np.argsort(np.sum((X - q) ** 2, axis=1))[:5]].mean(axis=0) for q in Xq])
        np.testing.assert_allclose(model.predict(Xq), expected, rtol=1e-15, atol=1e-15)

    def test_weight_formula_hand_case(self):
        w = kernel_weights(np.array([[0.0, 1.0]]), 1.0, math.log(3.0))
        np.testing.assert_allclose(w, [[0.75, 0.25]], rtol=1e-15)

    def test_two_neighbor_prediction(self):
        X = np.array([[0.0], [1.0]])
        Y = np.array([[2.0], [6.0]])
        model = HPTRegressor(n_neighbors=2, gamma=math.log(3.0), standardize=False).fit(X, Y)
        assert model.normalizer_ == 1.0
        assert model.predict([[0.0]])[0, 0] == pytest.approx((3 * 2.0 + 6.0) / 4, rel=1e-15)

    @pytest.mark.parametrize("standardize", [False, True])
    def test_absolute_normalization_scale_invariant(self, rng, standardize):
        X = rng.normal(size=(80, 3))
        Y = rng.normal(size=(80, 2))
        Xq = rng.normal(size=(30, 3))
        base = HPTRegressor(n_neighbors=10, standardize=standardize).fit(X, Y).predict(Xq)
        # a power of two scales every distance and the normalizer exactly
        scaled = HPTRegressor(n_neighbors=10, standardize=standardize).fit(4 * X, Y).predict(4 * Xq)
        np.testing.assert_array_equal(base, scaled)
        other = HPTRegressor(n_neighbors=10, standardize=standardize).fit(3.7 * X, Y).predict(3.7 * Xq)
        np.testing.assert_allclose(base, other, rtol=1e-10)

    def test_tree_matches_brute_force(self, rng):
        X = rng.normal(size=(500, 3))
        Y = rng.normal(size=(500, 2))
        Xq = rng.normal(size=(100, 3))
        brute = HPTRegressor(algorithm="brute").fit(X, Y)
        tree = HPTRegressor(algorithm="kd_tree").fit(X, Y)
        assert brute.normalizer_ == pytest.approx(tree.normalizer_, rel=1e-12)
        np.testing.assert_allclose(brute.predict(Xq), tree.predict(Xq), rtol=1e-10)

    def test_relative_normalization(self, rng):
        X = rng.normal(size=(50, 2))
        Y = rng.normal(size=(50, 1))
        q = rng.normal(size=(1, 2))
        model = HPTRegressor(n_neighbors=4, gamma=2.0, normalization="relative").fit(X, Y)
        dist, ind = model.kneighbors(q)
        w = np.exp(-2.0 * dist[0] / dist[0].max())
        assert model.predict(q)[0, 0] == pytest.approx(np.sum(w * Y[ind[0], 0]) / w.sum(), rel=1e-12)

    def test_neighbors_capped_at_training_size(self, rng):
        model = HPTRegressor(n_neighbors=50).fit(rng.normal(size=(7, 2)), rng.normal(size=7))
        assert model.n_neighbors_ == 7

    def test_far_queries_stay_finite(self, rng):
        X = rng.normal(size=(30, 2))
        model = HPTRegressor().fit(X, rng.normal(size=30))
        assert np.all(np.isfinite(model.predict(1e6 * np.ones((3, 2)))))


class TestTwoWay:
    def _ts(self, x, y, idx):
        return TrainingSet.from_images(x, y, idx)

    def test_shapes(self, small_pair):
        x, y, _ = small_pair
        result = regress_both_ways(x, y, self._ts(x, y, np.arange(0, 1024, 7)), HPTRegressor())
        assert result.y_hat.shape == y.shape and result.x_hat.shape == x.shape

    @staticmethod
    def _still_scene(seed):
        from hetcd.synth import SynthConfig, generate_pair

        x, _, _ = generate_pair(
            SynthConfig(n1=40, n2=40, noise_sigma_x=0.0, num_change_regions=0, rng_seed=seed))
        return x

    @pytest.mark.parametrize("kind", ["svr", "rfr", "hpt"])
    def test_same_modality_reproduces_noisy_copy(self, kind):
        sigma = 0.01
        x = self._still_scene(5)
        y = x + np.random.default_rng(1).normal(0, sigma, x.shape)
        result = regress_both_ways(x, y, self._ts(x, y, np.arange(0, 1600, 4)), make_regressor(kind))
        assert np.mean(np.abs(result.y_hat - y)) < 2.0 * sigma

    # the GP has no noise term, so it is checked as an interpolator on a clean copy
    def test_gpr_interpolates_clean_copy(self):
        x = self._still_scene(5)
        y = x.copy()
        result = regress_both_ways(x, y, self._ts(x, y, np.arange(0, 1600, 4)), make_regressor("gpr"))
        assert np.mean(np.abs(result.y_hat - y)) < 1e-3

    def test_hpt_round_trip(self):
        from hetcd.synth import SynthConfig, generate_pair

        x, _, _ = generate_pair(SynthConfig(n1=48, n2=48, noise_sigma_x=0.0, rng_seed=2))
        mix = np.array([[1.0, 0.3, 0.0], [0.2, 1.0, 0.1], [0.0, -0.4, 1.0]])
        y = x @ mix + 0.5
        idx = np.arange(0, 48 * 48, 3)
        ts = self._ts(x, y, idx)
        result = regress_both_ways(x, y, ts, HPTRegressor())
        back = result.backward.predict(result.forward.predict(ts.x))
        assert np.mean(np.abs(back - ts.x)) < 0.01

    def test_channel_mismatch(self, small_pair):
        x, y, _ = small_pair
        ts = TrainingSet([0, 1], np.zeros((2, 2)), np.zeros((2, 4)))
        with pytest.raises(ValueError, match="channels"):
            regress_both_ways(x, y, ts, HPTRegressor())
