"""
Multivariate stochastic volatility with correlated noises:

    y_t = S_t^{1/2} eps_t,  S_t = diag(exp(x_t))
    x_t = mu + Phi (x_{t-1} - mu) + Psi^{1/2} nu_t,   (eps_t, nu_t) ~ N(0, C)

The filter marginalizes eps out of the transition, so the state moves with
N(mu + Phi(x - mu), Psi^{1/2} C_nn Psi^{1/2}); the potential is then the
density of y_t given (x_{t-1}, x_t), i.e. eps_t given the implied nu_t.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.components.feynman_kac import FeynmanKacModel
from src.components.transforms import (GaussianKernelSpec, PsiBounds, gaussian_logpdf,
                                       gaussian_rosenblatt_inv)
from src.utils import rng as rng_streams
from src.utils.data_loader import as_int, as_matrix, as_vector, pick
from src.utils.errors import InvalidCovarianceError, ModelParameterError


def default_correlation(d: int) -> np.ndarray:
    """Block correlation matrix used for the d-dimensional benchmarks."""
    ones, eye = np.ones((d, d)), np.eye(d)
    cross = -0.1 * ones - 0.2 * eye
    return np.block([[0.6 * ones + 0.4 * eye, cross],
                     [cross, 0.8 * ones + 0.2 * eye]])


def _vector(value, d: int, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if v.size == 1:
        v = np.full(d, v[0])
    if v.shape != (d,):
        raise ModelParameterError(f"{name} must have {d} entries")
    return v


@dataclass(frozen=True)
class MsvParams:
    d: int = 1
    phi: np.ndarray = 0.9
    mu: np.ndarray = -9.0
    psi2: np.ndarray = 0.1
    C: Optional[np.ndarray] = None

    def __post_init__(self):
        d = int(self.d)
        if d < 1:
            raise ModelParameterError("msv dimension must be at least 1")
        phi = _vector(self.phi, d, 'phi')
        mu = _vector(self.mu, d, 'mu')
        psi2 = _vector(self.psi2, d, 'psi2')
        C = default_correlation(d) if self.C is None else np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        if np.any(np.abs(phi) >= 1.0):
            raise ModelParameterError("msv needs |phi_ii| < 1")
        if np.any(psi2 <= 0.0):
            raise ModelParameterError("msv needs psi2_ii > 0")
        if C.shape != (2 * d, 2 * d) or not np.allclose(C, C.T) or not np.allclose(np.diag(C), 1.0):
            raise InvalidCovarianceError("C must be a symmetric 2d x 2d matrix with unit diagonal")
        try:
            np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            raise InvalidCovarianceError("C is not positive definite")
        for name, value in (('d', d), ('phi', phi), ('mu', mu), ('psi2', psi2), ('C', C)):
            object.__setattr__(self, name, value)

    @property
    def transition_covariance(self) -> np.ndarray:
        s = np.sqrt(self.psi2)
        return s[:, None] * self.C[self.d:, self.d:] * s[None, :]

    @property
    def stationary_covariance(self) -> np.ndarray:
        """Sigma_ij = Q_ij / (1 - phi_i phi_j) for diagonal Phi."""
        return self.transition_covariance / (1.0 - np.outer(self.phi, self.phi))

    @property
    def stationary_std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.stationary_covariance))

    @property
    def has_leverage(self) -> bool:
        return bool(np.any(self.C[:self.d, self.d:] != 0.0))

    @classmethod
    def from_mapping(cls, values: dict) -> 'MsvParams':
        """Keys (under `msv.`): d, phi, mu, psi2 (scalar or per coordinate), C (rows separated by ';')."""
        return cls(d=pick(values, 'd', as_int, 1),
                   phi=pick(values, 'phi', as_vector, 0.9),
                   mu=pick(values, 'mu', as_vector, -9.0),
                   psi2=pick(values, 'psi2', as_vector, 0.1),
                   C=pick(values, 'C', as_matrix, None))


class MsvModel(FeynmanKacModel):
    name = 'msv'
    has_transition_density = True

    def __init__(self, params: MsvParams, observations: Optional[np.ndarray] = None):
        p = params
        d = p.d
        self.params = p
        self.d = d
        self.y = None if observations is None else np.asarray(observations, dtype=np.float64).reshape(-1, d)
        self.weight_depends_on_prev = p.has_leverage

        self.prior = GaussianKernelSpec.from_covariance(p.stationary_covariance, offset=p.mu)
        self.kernel = GaussianKernelSpec.from_covariance(
            p.transition_covariance, transition=np.diag(p.phi), offset=(1.0 - p.phi) * p.mu)

        C_ee, C_en, C_nn = p.C[:d, :d], p.C[:d, d:], p.C[d:, d:]
        self.regression = C_en @ np.linalg.inv(C_nn)
        self.cond_chol = np.linalg.cholesky(C_ee - self.regression @ C_en.T)
        self.marginal_chol = np.linalg.cholesky(C_ee)
        self._bounds = PsiBounds.stationary(p.mu, p.stationary_std)

    @property
    def horizon(self):
        return None if self.y is None else self.y.shape[0] - 1

    @property
    def psi_bounds(self) -> PsiBounds:
        return self._bounds

    def gamma0(self, u):
        return gaussian_rosenblatt_inv(self.prior, None, u)

    def gamma_t(self, t, x_prev, v):
        return gaussian_rosenblatt_inv(self.kernel, x_prev, v)

    def logG0(self, x):
        if self.y is None:
            return np.zeros(x.shape[0])
        eps = self.y[0] * np.exp(-0.5 * x)
        return gaussian_logpdf(eps, self.marginal_chol) - 0.5 * np.sum(x, axis=-1)

    def logGt(self, t, x_prev, x):
        if self.y is None:
            return np.zeros(x.shape[0])
        nu = (x - self.kernel.mean(x_prev)) / np.sqrt(self.params.psi2)
        eps = self.y[t] * np.exp(-0.5 * x)
        return gaussian_logpdf(eps - nu @ self.regression.T, self.cond_chol) - 0.5 * np.sum(x, axis=-1)

    def log_transition_density(self, t, x_prev, x):
        return gaussian_logpdf(x - self.kernel.mean(x_prev), self.kernel.chol)


def build_msv(params: MsvParams = None, observations=None) -> MsvModel:
    return MsvModel(params or MsvParams(), observations)


def simulate_msv(params: MsvParams, T: int, seed: int):
    """(states, observations), each (T+1, d); x_0 from the stationary law."""
    d = params.d
    generator = rng_streams.stream(seed, 0, rng_streams.SIMULATION)
    joint = generator.standard_normal((T + 1, 2 * d)) @ np.linalg.cholesky(params.C).T
    eps, nu = joint[:, :d], joint[:, d:]
    L0 = np.linalg.cholesky(params.stationary_covariance)
    x = np.empty((T + 1, d))
    x[0] = params.mu + L0 @ generator.standard_normal(d)
    s = np.sqrt(params.psi2)
    for t in range(1, T + 1):
        x[t] = params.mu + params.phi * (x[t - 1] - params.mu) + s * nu[t]
    y = np.exp(0.5 * x) * eps
    return x, y
