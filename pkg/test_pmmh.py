import numpy as np
import pytest
from scipy.special import logsumexp

from src.components.pmmh import (MarkovChainSample, acceptance_rate, mcmc_ess, pmmh_run,
                                 proposal_factor)
from src.models.families import get_family, lgss_family, lgss_params, simulate_family
from src.models.linear_gaussian import kalman_suite
from src.utils import rng as rng_streams
from src.utils.errors import (InvalidCovarianceError, PriorSupportError, SQMCError,
                              ZeroVarianceChainError)


@pytest.fixture(scope='module')
def family():
    _, y = simulate_family('lgss1', 20, 4, theta=[0.7])
    return lgss_family(y)


class TestPmmhRun:
    def test_shape_and_start(self, family):
        sample = pmmh_run(family, [0.5], [[0.05]], 30, N=16, engine='sqmc', seed=1)
        assert sample.chain.shape == (30, 1)
        assert sample.chain[0, 0] == 0.5
        assert not sample.accepted[0]
        assert sample.param_names == ('rho',)

    def test_rejections_carry_state(self, family):
        sample = pmmh_run(family, [0.5], [[0.3]], 60, N=16, engine='smc', seed=2)
        for i in range(1, 60):
            if sample.accepted[i]:
                assert sample.chain[i, 0] != sample.chain[i - 1, 0]
            else:
                assert sample.chain[i, 0] == sample.chain[i - 1, 0]
                assert sample.loglik[i] == sample.loglik[i - 1]
        assert 0 < sample.accepted.sum() < 59

    def test_proposals_outside_prior_rejected(self, family):
        sample = pmmh_run(family, [0.95], [[4.0]], 40, N=8, seed=3)
        assert np.all(np.abs(sample.chain) < 1.0)

    def test_exact_engine_loglik(self, family):
        sample = pmmh_run(family, [0.5], [[0.05]], 10, engine='exact', seed=1)
        for theta, loglik in zip(sample.chain[:, 0], sample.loglik):
            assert loglik == pytest.approx(family.exact_loglik([theta]))

    def test_seeded_runs_repeat(self, family):
        a = pmmh_run(family, [0.5], [[0.05]], 20, N=16, seed=5)
        b = pmmh_run(family, [0.5], [[0.05]], 20, N=16, seed=5)
        np.testing.assert_array_equal(a.chain, b.chain)
        np.testing.assert_array_equal(a.loglik, b.loglik)

    def test_exact_engine_posterior_mean(self, family):
        grid = np.linspace(-0.999, 0.999, 801)
        y = family.build([0.5]).y
        log_post = np.array([kalman_suite(lgss_params([r]), y).loglik for r in grid])
        weights = np.exp(log_post - logsumexp(log_post))
        target = float(weights @ grid)

        sample = pmmh_run(family, [0.5], [[0.15 ** 2]], 3000, engine='exact', seed=7)
        assert np.mean(sample.chain[500:, 0]) == pytest.approx(target, abs=0.06)

    def test_start_outside_prior(self, family):
        with pytest.raises(PriorSupportError):
            pmmh_run(family, [1.5], [[0.1]], 5)

    def test_bad_arguments(self, family):
        with pytest.raises(SQMCError):
            pmmh_run(family, [0.5], [[0.1]], 5, engine='gibbs')
        with pytest.raises(InvalidCovarianceError):
            pmmh_run(family, [0.5], np.eye(2), 5)

    def test_no_exact_likelihood(self):
        _, y = simulate_family('sv2', 5, 1)
        family = get_family('sv2', y)
        with pytest.raises(SQMCError):
            pmmh_run(family, family.default_theta, family.default_sigma, 3, engine='exact')

    def test_acceptance_rate(self, family):
        sample = pmmh_run(family, [0.5], [[0.05]], 1, seed=1)
        assert acceptance_rate(sample) == 0.0
        sample = pmmh_run(family, [0.5], [[0.01]], 25, N=32, seed=1)
        assert acceptance_rate(sample) == pytest.approx(sample.accepted[1:].mean())

    def test_to_frame(self, family):
        frame = pmmh_run(family, [0.5], [[0.05]], 5, N=8).to_frame()
        assert list(frame.columns) == ['iteration', 'rho', 'loglik', 'accepted']
        assert frame['iteration'].tolist() == [0, 1, 2, 3, 4]


class TestProposalFactor:
    def test_cholesky(self):
        sigma = np.array([[2.0, 0.5], [0.5, 1.0]])
        L = proposal_factor(sigma)
        np.testing.assert_allclose(L @ L.T, sigma)

    def test_singular(self):
        sigma = np.array([[1.0, 1.0], [1.0, 1.0]])
        L = proposal_factor(sigma)
        np.testing.assert_allclose(L @ L.T, sigma, atol=1e-12)

    def test_scalar(self):
        np.testing.assert_allclose(proposal_factor(0.25), [[0.5]])

    @pytest.mark.parametrize('sigma', [[[1.0, 0.2], [0.0, 1.0]], [[1.0, 2.0], [2.0, 1.0]], [[-1.0]]])
    def test_invalid(self, sigma):
        with pytest.raises(InvalidCovarianceError):
            proposal_factor(sigma)


class TestMcmcEss:
    def test_independent_draws(self):
        x = rng_streams.stream(1).standard_normal(5000)
        assert 0.75 * x.size <= mcmc_ess(x) <= 1.3 * x.size

    def test_autoregressive_chain(self):
        generator = rng_streams.stream(2)
        phi, n = 0.9, 20_000
        x = np.empty(n)
        x[0] = generator.standard_normal()
        noise = generator.standard_normal(n) * np.sqrt(1 - phi ** 2)
        for i in range(1, n):
            x[i] = phi * x[i - 1] + noise[i]
        expected = n * (1 - phi) / (1 + phi)
        assert mcmc_ess(x) == pytest.approx(expected, rel=0.35)

    def test_coordinate(self):
        x = rng_streams.stream(3).standard_normal((500, 2))
        x[:, 0] = 0.0
        assert mcmc_ess(x, coordinate=1) > 100
        with pytest.raises(ZeroVarianceChainError):
            mcmc_ess(x, coordinate=0)

    def test_sample_input(self):
        chain = rng_streams.stream(4).standard_normal((200, 1))
        sample = MarkovChainSample(chain, np.zeros(200), np.ones(200, dtype=bool), np.eye(1))
        assert mcmc_ess(sample) == mcmc_ess(chain[:, 0])

    def test_short_chain(self):
        with pytest.raises(SQMCError):
            mcmc_ess(np.arange(50.0))
