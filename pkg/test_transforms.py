import numpy as np
import pytest
from scipy import stats

from src.components.lowdisc import RandomizationScheme, sobol_points
from src.components.transforms import (PSI_EPS, GaussianKernelSpec, PsiBounds, gaussian_logpdf,
                                       gaussian_rosenblatt_inv, norm_inv_cdf, psi_logistic,
                                       psi_logistic_inv)
from src.utils import rng as rng_streams
from src.utils.errors import DomainError, InvalidCovarianceError, ModelParameterError


def _uniforms(shape, seed=0):
    return rng_streams.stream(seed, 0, rng_streams.POINTS).random(shape)


class TestNormInvCdf:
    def test_median(self):
        assert norm_inv_cdf(0.5) == 0.0

    def test_known_quantile(self):
        assert norm_inv_cdf(0.975) == pytest.approx(1.959963984540054, abs=1e-9)

    def test_antisymmetry(self):
        u = np.linspace(0.001, 0.499, 200)
        np.testing.assert_allclose(norm_inv_cdf(u), -norm_inv_cdf(1 - u), atol=1e-9)

    def test_inverts_cdf(self):
        u = np.linspace(1e-6, 1 - 1e-6, 1001)
        np.testing.assert_allclose(stats.norm.cdf(norm_inv_cdf(u)), u, atol=1e-12)

    def test_monotone(self):
        z = norm_inv_cdf(np.linspace(1e-4, 1 - 1e-4, 10_000))
        assert np.all(np.diff(z) > 0)

    @pytest.mark.parametrize('u', [0.0, 1.0, -0.1, np.nan])
    def test_domain(self, u):
        with pytest.raises(DomainError):
            norm_inv_cdf(u)


class TestGaussianKernel:
    def test_center_maps_to_mean(self):
        spec = GaussianKernelSpec(np.eye(3))
        np.testing.assert_allclose(gaussian_rosenblatt_inv(spec, None, np.full((1, 3), 0.5)), [[0, 0, 0]])

    def test_scalar_quantile(self):
        spec = GaussianKernelSpec(np.array([[2.0]]), offset=[1.0])
        x = gaussian_rosenblatt_inv(spec, None, np.array([[0.975]]))
        assert x[0, 0] == pytest.approx(1.0 + 1.959964 * 2.0, abs=1e-5)

    def test_mean_map(self):
        spec = GaussianKernelSpec(np.eye(2), transition=np.array([[0.5, 0.0], [0.1, 0.9]]), offset=[1.0, -1.0])
        x_prev = np.array([[2.0, 4.0]])
        np.testing.assert_allclose(spec.mean(x_prev), [[2.0, 2.8]])

    def test_scrambled_sobol_covariance(self):
        L = np.array([[1.0, 0.0], [0.5, 1.0]])
        u = sobol_points(2 ** 12, 2, RandomizationScheme('owen', 3)).values
        x = gaussian_rosenblatt_inv(GaussianKernelSpec(L), None, np.clip(u, 1e-16, None))
        target = L @ L.T
        assert np.linalg.norm(np.cov(x.T) - target) <= 0.05 * np.linalg.norm(target)

    def test_pseudo_random_moments(self):
        cov = np.array([[2.0, 0.6, 0.0], [0.6, 1.0, -0.3], [0.0, -0.3, 0.5]])
        spec = GaussianKernelSpec.from_covariance(cov, offset=[1.0, 2.0, 3.0])
        n = 10 ** 5
        x = gaussian_rosenblatt_inv(spec, None, _uniforms((n, 3), 8))
        se = np.sqrt(np.diag(cov) / n)
        assert np.all(np.abs(x.mean(axis=0) - [1.0, 2.0, 3.0]) < 3 * se)
        np.testing.assert_allclose(np.cov(x.T), cov, atol=0.03)

    def test_not_positive_definite(self):
        with pytest.raises(InvalidCovarianceError):
            GaussianKernelSpec.from_covariance([[1.0, 2.0], [2.0, 1.0]])

    def test_bad_factor(self):
        with pytest.raises(InvalidCovarianceError):
            GaussianKernelSpec(np.array([[1.0, 0.3], [0.0, 1.0]]))
        with pytest.raises(InvalidCovarianceError):
            GaussianKernelSpec(np.array([[0.0]]))

    def test_logpdf_matches_scipy(self):
        cov = np.array([[1.5, 0.4], [0.4, 0.8]])
        r = _uniforms((50, 2), 2) * 4 - 2
        expected = stats.multivariate_normal(np.zeros(2), cov).logpdf(r)
        np.testing.assert_allclose(gaussian_logpdf(r, np.linalg.cholesky(cov)), expected, rtol=1e-12)


class TestPsi:
    bounds = PsiBounds([-1.0, 0.0], [1.0, 10.0])

    def test_lower_bound_maps_to_half(self):
        np.testing.assert_allclose(psi_logistic(np.array([[-1.0, 0.0]]), self.bounds), [[0.5, 0.5]])

    def test_limits_are_clamped(self):
        u = psi_logistic(np.array([[1e6, -1e6]]), self.bounds)
        np.testing.assert_array_equal(u, [[1.0 - PSI_EPS, PSI_EPS]])

    def test_increasing(self):
        x = np.linspace(-30, 30, 2001)[:, None].repeat(2, axis=1)
        u = psi_logistic(x, self.bounds)
        assert np.all(np.diff(u, axis=0) >= 0)

    def test_round_trip(self):
        span = self.bounds.upper - self.bounds.lower
        x = self.bounds.lower + span * (_uniforms((10_000, 2), 4) * 10 - 5)
        back = psi_logistic_inv(psi_logistic(x, self.bounds), self.bounds)
        np.testing.assert_allclose(back, x, rtol=1e-9, atol=1e-9)

    def test_invalid_bounds(self):
        with pytest.raises(ModelParameterError):
            PsiBounds([0.0], [0.0])

    def test_stationary(self):
        b = PsiBounds.stationary([-9.0], [0.5])
        np.testing.assert_allclose(b.lower, [-10.0])
        np.testing.assert_allclose(b.upper, [-8.0])

    def test_extend_prepends(self):
        b = self.bounds.extend(-5.0, 5.0)
        np.testing.assert_allclose(b.lower, [-5.0, -1.0, 0.0])
        assert b.d == 3
