"""
Particle marginal Metropolis-Hastings.

A Gaussian random walk on theta whose acceptance ratio uses the particle
estimate of the likelihood (SMC or SQMC) in place of the exact one. The
estimate attached to the current state is carried along and never
recomputed, which keeps the chain exact.
"""
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

import config
from src.components.feynman_kac import EngineConfig, log_evidence, run_filter
from src.components.lowdisc import RandomizationScheme
from src.models.families import ParameterModelFamily
from src.utils import rng as rng_streams
from src.utils.errors import (InvalidCovarianceError, PriorSupportError, SQMCError,
                              ZeroVarianceChainError)
from src.utils.logger import get_logger

logger = get_logger(__name__)

PMMH_ENGINES = ('smc', 'sqmc', 'exact')
MIN_ESS_LENGTH = 100


@dataclass
class MarkovChainSample:
    """Row i is the state after iteration i; row 0 is the starting point."""
    chain: np.ndarray
    loglik: np.ndarray
    accepted: np.ndarray
    sigma: np.ndarray
    param_names: Sequence[str] = field(default_factory=tuple)
    engine: str = 'sqmc'

    @property
    def n_iter(self) -> int:
        return self.chain.shape[0]

    def to_frame(self) -> pd.DataFrame:
        names = list(self.param_names) or [f"theta{j}" for j in range(self.chain.shape[1])]
        frame = pd.DataFrame(self.chain, columns=names)
        frame.insert(0, 'iteration', np.arange(self.n_iter))
        frame['loglik'] = self.loglik
        frame['accepted'] = self.accepted.astype(int)
        return frame


def proposal_factor(sigma) -> np.ndarray:
    """A square root L of a symmetric PSD matrix (Cholesky, or eigh when singular)."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    if sigma.shape[0] != sigma.shape[1] or not np.allclose(sigma, sigma.T):
        raise InvalidCovarianceError("proposal covariance must be a symmetric matrix")
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    eigenvalues, vectors = np.linalg.eigh(sigma)
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    if np.min(eigenvalues) < -1e-10 * scale:
        raise InvalidCovarianceError("proposal covariance is not positive semidefinite")
    return vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))[None, :]


def _loglik(family: ParameterModelFamily, theta, engine: str, N: int, seed: int, iteration: int,
            scheme_kind: str) -> float:
    if engine == 'exact':
        if family.exact_loglik is None:
            raise SQMCError(f"family '{family.name}' has no exact likelihood")
        return float(family.exact_loglik(theta))
    filter_seed = rng_streams.derive_seed(seed, iteration, rng_streams.FILTER_SEED)
    engine_config = EngineConfig(engine=engine, N=N, seed=filter_seed,
                                 scheme=RandomizationScheme(scheme_kind, filter_seed))
    output = run_filter(family.build(theta), family.T, engine_config,
                        keep_history=False, raise_on_collapse=False)
    return log_evidence(output)


def pmmh_run(family: ParameterModelFamily, theta0, sigma, n_iter: int, N: int = 32,
             engine: str = 'sqmc', seed: int = 0, scheme_kind: str = None) -> MarkovChainSample:
    """
    Runs n_iter - 1 random-walk proposals from theta0.

    Args:
        family: parametric model with its prior
        theta0: starting point, inside the prior support
        sigma: p x p proposal covariance (symmetric PSD)
        n_iter: number of chain rows, theta0 included
        N: particles per likelihood estimate
        engine: 'smc', 'sqmc' or 'exact' (textbook MH on the family's exact likelihood)
        seed: run seed; iteration i uses the streams (seed, i)

    Returns:
        MarkovChainSample
    """
    if engine not in PMMH_ENGINES:
        raise SQMCError(f"unknown PMMH engine '{engine}'")
    if n_iter < 1:
        raise SQMCError("n_iter must be at least 1")
    scheme_kind = scheme_kind or config.DEFAULT_SCHEME
    theta = np.atleast_1d(np.asarray(theta0, dtype=np.float64)).copy()
    p = theta.size
    L = proposal_factor(sigma)
    if L.shape != (p, p):
        raise InvalidCovarianceError(f"proposal covariance must be {p} x {p}")

    log_prior = family.log_prior(theta)
    if not np.isfinite(log_prior):
        raise PriorSupportError("theta0 lies outside the prior support")
    loglik = _loglik(family, theta, engine, N, seed, 0, scheme_kind)

    chain = np.empty((n_iter, p))
    logliks = np.empty(n_iter)
    accepted = np.zeros(n_iter, dtype=bool)
    chain[0], logliks[0] = theta, loglik
    report_every = max(1, n_iter // 10)

    for i in range(1, n_iter):
        generator = rng_streams.stream(seed, i, rng_streams.PROPOSAL)
        proposal = theta + L @ generator.standard_normal(p)
        log_u = np.log(generator.random())
        proposal_prior = family.log_prior(proposal)
        if np.isfinite(proposal_prior):
            proposal_loglik = _loglik(family, proposal, engine, N, seed, i, scheme_kind)
            log_ratio = proposal_prior + proposal_loglik - log_prior - loglik
            if np.isfinite(proposal_loglik) and log_u < log_ratio:
                theta, log_prior, loglik = proposal, proposal_prior, proposal_loglik
                accepted[i] = True
        chain[i], logliks[i] = theta, loglik
        if i % report_every == 0:
            logger.info("pmmh %s iteration %d/%d, acceptance %.3f", engine, i, n_iter - 1,
                        accepted[1:i + 1].mean())

    return MarkovChainSample(chain, logliks, accepted, np.atleast_2d(np.asarray(sigma, dtype=np.float64)),
                             tuple(family.param_names), engine)


def acceptance_rate(sample: MarkovChainSample) -> float:
    """Accepted moves over n_iter - 1 (0 for a one-row chain)."""
    if sample.n_iter < 2:
        return 0.0
    return float(sample.accepted[1:].sum() / (sample.n_iter - 1))


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    n = x.size
    centered = x - x.mean()
    spectrum = np.fft.rfft(centered, 2 * n)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), 2 * n)[:n]
    return acov / acov[0]


def mcmc_ess(sample, coordinate: int = 0) -> float:
    """
    n / (1 + 2 sum_k rho_k), the autocorrelations summed in adjacent pairs
    up to the first pair whose sum is not positive (initial positive sequence).
    """
    chain = sample.chain if isinstance(sample, MarkovChainSample) else np.asarray(sample, dtype=np.float64)
    x = chain[:, coordinate] if chain.ndim == 2 else chain
    n = x.size
    if n < MIN_ESS_LENGTH:
        raise SQMCError(f"ESS needs a chain of at least {MIN_ESS_LENGTH} rows")
    if np.all(x == x[0]):
        raise ZeroVarianceChainError("constant chain: ESS is undefined")
    rho = _autocorrelation(x)
    pairs = rho[0:n - 1:2] + rho[1:n:2]
    positive = np.cumprod(pairs > 0.0).astype(bool)
    tau = -1.0 + 2.0 * np.sum(pairs[positive])
    return float(n / max(tau, 1.0 / n))
