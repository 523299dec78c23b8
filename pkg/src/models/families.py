"""
Parametric model families for particle MCMC.

A family maps a parameter vector theta to a Feynman-Kac model over fixed
observations and carries its log-prior (and, when available, an exact
log-likelihood used by the `exact` PMMH engine).
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from src.models.linear_gaussian import (LinearGaussianParams, build_linear_gaussian, kalman_suite,
                                        simulate_linear_gaussian)
from src.models.msv import MsvParams, build_msv, simulate_msv
from src.utils.errors import SQMCError

# 1/psi2 ~ Gamma(shape, rate)
SV_PRECISION_SHAPE = 10.0 * np.exp(-10.0)
SV_PRECISION_RATE = 10.0 * np.exp(-3.0)
SV_PARAM_NAMES = ('phi1', 'phi2', 'psi2_1', 'psi2_2', 'mu1', 'mu2', 'rho_eps', 'rho_nu')
SV_PILOT_STEP = 0.011


@dataclass(frozen=True)
class ParameterModelFamily:
    name: str
    param_names: Sequence[str]
    build: Callable
    log_prior: Callable
    T: int
    exact_loglik: Optional[Callable] = None
    default_theta: Optional[np.ndarray] = None
    default_sigma: Optional[np.ndarray] = field(default=None)

    @property
    def p(self) -> int:
        return len(self.param_names)


# --- bivariate stochastic volatility without leverage ---

def sv_correlation(rho_eps: float, rho_nu: float) -> np.ndarray:
    """Block-diagonal C: eps and nu are independent, each block a 2x2 correlation."""
    block = lambda r: np.array([[1.0, r], [r, 1.0]])
    C = np.zeros((4, 4))
    C[:2, :2] = block(rho_eps)
    C[2:, 2:] = block(rho_nu)
    return C


def sv_params(theta) -> MsvParams:
    theta = np.asarray(theta, dtype=np.float64)
    return MsvParams(d=2, phi=theta[0:2], psi2=theta[2:4], mu=theta[4:6], C=sv_correlation(theta[6], theta[7]))


def sv_log_prior(theta) -> float:
    """
    phi_ii ~ U(0, 1), 1/psi2_ii ~ Gamma(10 e^-10, rate 10 e^-3) (density taken
    on the psi2 scale), flat mu, and a uniform 2x2 correlation per block.
    """
    theta = np.asarray(theta, dtype=np.float64)
    phi, psi2, rho = theta[0:2], theta[2:4], theta[6:8]
    if np.any(phi <= 0.0) or np.any(phi >= 1.0) or np.any(psi2 <= 0.0) or np.any(np.abs(rho) >= 1.0):
        return -np.inf
    precision = 1.0 / psi2
    log_density = stats.gamma.logpdf(precision, SV_PRECISION_SHAPE, scale=1.0 / SV_PRECISION_RATE)
    return float(np.sum(log_density - 2.0 * np.log(psi2)) + 2.0 * np.log(0.5))


def sv_family(observations) -> ParameterModelFamily:
    y = np.asarray(observations, dtype=np.float64).reshape(-1, 2)
    return ParameterModelFamily(
        name='sv2', param_names=SV_PARAM_NAMES,
        build=lambda theta: build_msv(sv_params(theta), y),
        log_prior=sv_log_prior, T=y.shape[0] - 1,
        default_theta=DEFAULT_THETA['sv2'].copy(),
        default_sigma=SV_PILOT_STEP ** 2 * np.eye(8))


def simulate_sv_family(theta, T: int, seed: int):
    return simulate_msv(sv_params(theta), T, seed)


# --- one-parameter linear-Gaussian family ---

def lgss_params(theta, sigma2: float = 1.0, obs_var: float = 1.0) -> LinearGaussianParams:
    return LinearGaussianParams.scalar(rho=float(np.asarray(theta).reshape(-1)[0]), sigma2=sigma2, obs_var=obs_var)


def lgss_log_prior(theta) -> float:
    """rho ~ U(-1, 1)."""
    rho = float(np.asarray(theta).reshape(-1)[0])
    return float(np.log(0.5)) if -1.0 < rho < 1.0 else -np.inf


def lgss_family(observations, sigma2: float = 1.0, obs_var: float = 1.0) -> ParameterModelFamily:
    y = np.asarray(observations, dtype=np.float64).reshape(-1, 1)
    return ParameterModelFamily(
        name='lgss1', param_names=('rho',),
        build=lambda theta: build_linear_gaussian(lgss_params(theta, sigma2, obs_var), y),
        log_prior=lgss_log_prior, T=y.shape[0] - 1,
        exact_loglik=lambda theta: kalman_suite(lgss_params(theta, sigma2, obs_var), y).loglik,
        default_theta=DEFAULT_THETA['lgss1'].copy(), default_sigma=np.array([[0.1 ** 2]]))


def simulate_lgss_family(theta, T: int, seed: int, sigma2: float = 1.0, obs_var: float = 1.0):
    return simulate_linear_gaussian(lgss_params(theta, sigma2, obs_var), T, seed)


FAMILIES = {'sv2': sv_family, 'lgss1': lgss_family}
FAMILY_SIMULATORS = {'sv2': simulate_sv_family, 'lgss1': simulate_lgss_family}
DEFAULT_THETA = {'sv2': np.array([0.9, 0.9, 0.1, 0.1, -9.0, -9.0, 0.6, 0.8]), 'lgss1': np.array([0.5])}


def get_family(name: str, observations) -> ParameterModelFamily:
    try:
        builder = FAMILIES[name]
    except KeyError:
        raise SQMCError(f"unknown model family '{name}' (choose from {', '.join(sorted(FAMILIES))})")
    return builder(observations)


def simulate_family(name: str, T: int, seed: int, theta=None):
    """Synthetic (states, observations) of a family, at its default theta unless one is given."""
    if name not in FAMILY_SIMULATORS:
        raise SQMCError(f"unknown model family '{name}' (choose from {', '.join(sorted(FAMILIES))})")
    theta = DEFAULT_THETA[name] if theta is None else np.asarray(theta, dtype=np.float64)
    return FAMILY_SIMULATORS[name](theta, T, seed)
