import numpy as np
import pytest
from scipy.special import logsumexp

from src.components.feynman_kac import EngineConfig, estimate_moment, open_unit, run_filter
from src.components.lowdisc import RandomizationScheme
from src.components.smoothing import (AdditiveAugmentedModel, PathAugmentedModel, TrajectorySet,
                                      backward_pass, backward_points, backward_smoothing, backward_weights,
                                      forward_smoothing_additive, forward_smoothing_path,
                                      smoothed_moment)
from src.models.linear_gaussian import (LinearGaussianParams, build_linear_gaussian, kalman_suite,
                                        simulate_linear_gaussian)
from src.models.msv import MsvParams, build_msv, simulate_msv
from src.utils.errors import MissingDensityError, ResolutionOverflowError, SQMCError
from test_feynman_kac import RandomWalk


@pytest.fixture(scope='module')
def lgss():
    params = LinearGaussianParams.scalar(0.9)
    _, y = simulate_linear_gaussian(params, 10, 7)
    return params, y, build_linear_gaussian(params, y)


class TestAugmentedModels:
    def test_additive_layout(self, lgss):
        _, _, model = lgss
        augmented = AdditiveAugmentedModel(model, lambda x: x[:, 0], (-5.0, 5.0))
        assert augmented.d == 2 and augmented.dv == 1
        z0 = augmented.gamma0(np.array([[0.5], [0.975]]))
        np.testing.assert_array_equal(z0[:, 0], [0.0, 0.0])
        z1 = augmented.gamma_t(1, z0, np.array([[0.5], [0.5]]))
        np.testing.assert_allclose(z1[:, 0], z0[:, 1])
        np.testing.assert_allclose(augmented.psi_bounds.lower[0], -5.0)

    def test_path_layout(self, lgss):
        _, _, model = lgss
        augmented = PathAugmentedModel(model, 3)
        z = augmented.gamma0(np.array([[0.5], [0.975]]))
        for t in range(1, 4):
            z = augmented.gamma_t(t, z, np.array([[0.5], [0.5]]))
        assert z.shape == (2, 4)
        np.testing.assert_allclose(z[0], [0.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(z[1, 1:], 0.9 ** np.arange(1, 4) * z[1, 0])
        assert augmented.sort_coordinates(1, z).shape == (2, 2)


class TestForwardSmoothing:
    engine = EngineConfig('sqmc', 256, 3)

    def test_zero_functional(self, lgss):
        _, _, model = lgss
        estimates = forward_smoothing_additive(model, lambda x: np.zeros(x.shape[0]), self.engine, 10)
        np.testing.assert_array_equal(estimates, np.zeros(11))

    def test_constant_functional(self, lgss):
        _, _, model = lgss
        estimates = forward_smoothing_additive(model, lambda x: 2.0, self.engine, 5)
        np.testing.assert_allclose(estimates, 2.0 * np.arange(1, 7))

    def test_first_step_is_filter_moment(self, lgss):
        _, _, model = lgss
        estimate = forward_smoothing_additive(model, lambda x: x[:, 0] ** 2, self.engine, 0)[0]
        output = run_filter(model, 0, self.engine)
        assert estimate == pytest.approx(estimate_moment(output, 0, lambda x: x[:, 0] ** 2)[0], rel=1e-10)

    @pytest.mark.slow
    def test_additive_against_smoother(self, lgss):
        params, y, model = lgss
        target = kalman_suite(params, y).smoother_means[:, 0].sum()
        runs = [forward_smoothing_additive(model, lambda x: x[:, 0], EngineConfig('sqmc', 2 ** 10, s), 10)[-1]
                for s in range(200)]
        assert abs(np.mean(runs) - target) <= 3 * np.std(runs, ddof=1) / np.sqrt(len(runs))

    @pytest.mark.slow
    def test_path_last_coordinate_is_filter_mean(self, lgss):
        params, y, model = lgss
        kalman = kalman_suite(params, y[:5])
        runs = np.array([forward_smoothing_path(model, lambda p: p[:, -1, 0], EngineConfig('sqmc', 2 ** 10, s), 4)
                         for s in range(200)])
        band = 3 * runs.std(axis=0, ddof=1) / np.sqrt(len(runs))
        assert np.all(np.abs(runs.mean(axis=0) - kalman.filter_means[:, 0]) <= band)

    @pytest.mark.slow
    def test_path_first_coordinate_is_smoothed(self, lgss):
        params, y, model = lgss
        target = kalman_suite(params, y[:5]).smoother_means[0, 0]
        runs = [forward_smoothing_path(model, lambda p: p[:, 0, 0], EngineConfig('sqmc', 2 ** 10, s), 4)[-1]
                for s in range(200)]
        assert abs(np.mean(runs) - target) <= 3 * np.std(runs, ddof=1) / np.sqrt(len(runs))

    def test_path_overflow(self, lgss):
        _, _, model = lgss
        with pytest.raises(ResolutionOverflowError):
            forward_smoothing_path(model, lambda p: p[:, 0, 0], self.engine, 64)


class FlatKernelWalk(RandomWalk):
    """Random walk with a Gaussian potential whose declared transition density ignores x_{t-1}."""
    has_transition_density = True

    def logGt(self, t, x_prev, x):
        return -0.5 * x[:, 0] ** 2

    def log_transition_density(self, t, x_prev, x):
        return np.full(x.shape[:-1], -0.5 * np.log(2 * np.pi))


class TestBackwardWeights:
    def test_flat_kernel_gives_filter_weights(self):
        model = FlatKernelWalk()
        output = run_filter(model, 3, EngineConfig('sqmc', 32, 1))
        x_next = output.states[3][:5]
        weights = backward_weights(output, model, 2, x_next)
        assert np.ptp(output.W[2]) > 0.0
        np.testing.assert_allclose(weights, np.repeat(output.W[2][None, :], 5, axis=0), rtol=1e-12, atol=0.0)

    def test_rows_are_weight_vectors(self, lgss):
        _, _, model = lgss
        output = run_filter(model, 6, EngineConfig('sqmc', 100, 2))
        for t in range(6):
            weights = backward_weights(output, model, t, output.states[t + 1][:17])
            assert weights.shape == (17, 100)
            assert np.all(weights >= 0.0)
            np.testing.assert_allclose(weights.sum(axis=1), 1.0, rtol=0.0, atol=1e-12 * 100)

    def test_leverage_rows_are_weight_vectors(self):
        params = MsvParams()
        _, y = simulate_msv(params, 4, 3)
        model = build_msv(params, y)
        output = run_filter(model, 4, EngineConfig('smc', 64, 1))
        weights = backward_weights(output, model, 3, output.states[4])
        assert np.all(weights >= 0.0)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, rtol=0.0, atol=1e-12 * 64)


class TestBackwardSmoothing:
    def test_needs_density(self):
        output = run_filter(RandomWalk(), 3, EngineConfig('sqmc', 16))
        with pytest.raises(MissingDensityError):
            backward_pass(output, RandomWalk(), 8)

    def test_needs_history(self, lgss):
        _, _, model = lgss
        output = run_filter(model, 3, EngineConfig('sqmc', 16), keep_history=False)
        with pytest.raises(SQMCError):
            backward_pass(output, model, 8)

    def test_indices_match_paths(self, lgss):
        _, _, model = lgss
        output = run_filter(model, 6, EngineConfig('sqmc', 64, 2))
        trajectories = backward_pass(output, model, 32, RandomizationScheme('owen', 2))
        assert trajectories.paths.shape == (32, 7, 1)
        assert trajectories.n_paths == 32 and trajectories.T == 6
        for t in range(7):
            np.testing.assert_array_equal(trajectories.paths[:, t], output.states_at(t)[trajectories.indices[:, t]])

    def test_single_time_step(self, lgss):
        _, _, model = lgss
        output = run_filter(model, 0, EngineConfig('sqmc', 2 ** 10, 5))
        trajectories = backward_pass(output, model, 2 ** 10, RandomizationScheme('owen', 5))
        assert smoothed_moment(trajectories, 0)[0] == pytest.approx(estimate_moment(output, 0, lambda x: x)[0],
                                                                     abs=0.02)

    def test_leverage_weights_match_direct_inversion(self):
        params = MsvParams()
        _, y = simulate_msv(params, 1, 3)
        model = build_msv(params, y)
        assert model.weight_depends_on_prev
        output = run_filter(model, 1, EngineConfig('sqmc', 16, 1))
        scheme = RandomizationScheme('owen', 4)
        trajectories = backward_pass(output, model, 8, scheme)

        u = open_unit(backward_points(8, 1, scheme))
        u = u[np.argsort(u[:, 0], kind='stable')]
        particles = output.states_at(0)
        for n in range(8):
            x_next = np.repeat(trajectories.paths[n, 1][None, :], 16, axis=0)
            logw = (np.log(output.weights_at(0)) + model.log_transition_density(1, particles, x_next)
                    + model.logGt(1, particles, x_next))
            cdf = np.cumsum(np.exp(logw - logsumexp(logw)))
            expected = min(int(np.searchsorted(cdf, u[n, 1], side='left')), 15)
            assert trajectories.indices[n, 0] == expected

    @pytest.mark.slow
    def test_against_smoother(self):
        params = LinearGaussianParams.scalar(0.9)
        _, y = simulate_linear_gaussian(params, 20, 1)
        model = build_linear_gaussian(params, y)
        rts = kalman_suite(params, y).smoother_means[:, 0]
        runs = np.array([backward_smoothing(model, 20, EngineConfig('sqmc', 2 ** 9, s), 2 ** 9)[0][:, 0]
                         for s in range(100)])
        band = 3 * runs.std(axis=0, ddof=1) / np.sqrt(len(runs))
        assert np.all(np.abs(runs.mean(axis=0) - rts) <= band)

    def test_smc_engine(self, lgss):
        _, _, model = lgss
        estimates, trajectories = backward_smoothing(model, 5, EngineConfig('smc', 64, 1), 16,
                                                     phi=lambda x: x[:, 0] ** 2)
        assert estimates.shape == (6, 1)
        assert np.all(estimates >= 0.0)
        assert trajectories.n_paths == 16

    @pytest.mark.slow
    def test_against_smoother_2d(self):
        params = LinearGaussianParams.diagonal(2, 0.8)
        _, y = simulate_linear_gaussian(params, 20, 11)
        model = build_linear_gaussian(params, y)
        kalman = kalman_suite(params, y).smoother_means
        runs = np.array([backward_smoothing(model, 20, EngineConfig('sqmc', 2 ** 9, s), 2 ** 9)[0]
                         for s in range(100)])
        band = 3 * runs.std(axis=0, ddof=1) / np.sqrt(len(runs))
        assert np.all(np.abs(runs.mean(axis=0) - kalman) <= band)


class TestBackwardPoints:
    def test_sobol_when_dimension_fits(self):
        values = backward_points(16, 3, RandomizationScheme('none'))
        np.testing.assert_array_equal(values[0], np.zeros(4))

    def test_iid_above_table(self):
        values = backward_points(16, 40, RandomizationScheme('owen', 1))
        assert values.shape == (16, 41)
        assert values.min() >= 0.0 and values.max() < 1.0

    def test_smoothed_moment_range(self):
        trajectories = TrajectorySet(np.zeros((4, 3, 1)), np.zeros((4, 3), dtype=np.int64))
        with pytest.raises(SQMCError):
            smoothed_moment(trajectories, 3)
