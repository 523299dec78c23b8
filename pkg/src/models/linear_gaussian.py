"""
Linear-Gaussian state-space model and its exact oracles.

    x_0 ~ N(m0, P0),  x_t = A x_{t-1} + N(0, Q),  y_t = B x_t + N(0, R)

`kalman_suite` runs the Kalman filter (exact log-likelihood and filtering
moments) followed by the Rauch-Tung-Striebel backward pass.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, stats

from src.components.feynman_kac import FeynmanKacModel
from src.components.transforms import (GaussianKernelSpec, PsiBounds, gaussian_logpdf,
                                       gaussian_rosenblatt_inv)
from src.utils import rng as rng_streams
from src.utils.data_loader import as_float, as_int, as_matrix, as_vector, pick
from src.utils.errors import InvalidCovarianceError, ModelParameterError
from src.utils.logger import get_logger

logger = get_logger(__name__)


def _matrix(value, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(value, dtype=np.float64))
    if not np.all(np.isfinite(m)):
        raise ModelParameterError(f"{name} has non-finite entries")
    return m


def _check_spd(matrix: np.ndarray, name: str):
    if matrix.shape[0] != matrix.shape[1] or not np.allclose(matrix, matrix.T):
        raise InvalidCovarianceError(f"{name} must be a symmetric matrix")
    try:
        np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise InvalidCovarianceError(f"{name} is not positive definite")


@dataclass(frozen=True)
class LinearGaussianParams:
    A: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    R: np.ndarray
    m0: np.ndarray
    P0: np.ndarray

    def __post_init__(self):
        for name in ('A', 'Q', 'B', 'R', 'P0'):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))
        object.__setattr__(self, 'm0', np.atleast_1d(np.asarray(self.m0, dtype=np.float64)))
        d, dy = self.A.shape[0], self.B.shape[0]
        if self.A.shape != (d, d) or self.Q.shape != (d, d) or self.P0.shape != (d, d):
            raise ModelParameterError("A, Q and P0 must all be d x d")
        if self.B.shape != (dy, d) or self.R.shape != (dy, dy) or self.m0.shape != (d,):
            raise ModelParameterError("B must be dy x d, R dy x dy and m0 of length d")
        _check_spd(self.Q, 'Q')
        _check_spd(self.R, 'R')
        _check_spd(self.P0, 'P0')

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def dy(self) -> int:
        return self.B.shape[0]

    @property
    def is_stable(self) -> bool:
        return bool(np.max(np.abs(np.linalg.eigvals(self.A))) < 1.0)

    def stationary_covariance(self) -> np.ndarray:
        """Solution of P = A P A^T + Q (requires a stable A)."""
        return linalg.solve_discrete_lyapunov(self.A, self.Q)

    @classmethod
    def scalar(cls, rho: float = 0.9, sigma2: float = 1.0, obs_var: float = 1.0,
               prior_var: Optional[float] = None) -> 'LinearGaussianParams':
        """AR(1) observed in noise; the prior defaults to the stationary law."""
        if prior_var is None:
            prior_var = sigma2 / (1.0 - rho ** 2) if abs(rho) < 1 else sigma2
        return cls([[rho]], [[sigma2]], [[1.0]], [[obs_var]], [0.0], [[prior_var]])

    @classmethod
    def diagonal(cls, d: int, rho: float = 0.9, sigma2: float = 1.0, obs_var: float = 1.0) -> 'LinearGaussianParams':
        eye = np.eye(d)
        return cls(rho * eye, sigma2 * eye, eye, obs_var * eye, np.zeros(d), sigma2 / (1.0 - rho ** 2) * eye)

    @classmethod
    def from_mapping(cls, values: dict) -> 'LinearGaussianParams':
        """Keys (under `lgss.`): d, rho, sigma2, obs_var, or full matrices A, Q, B, R, m0, P0."""
        if 'A' in values:
            A = as_matrix(values['A'], 'A')
            d = A.shape[0]
            Q = pick(values, 'Q', as_matrix, np.eye(d))
            B = pick(values, 'B', as_matrix, np.eye(d))
            R = pick(values, 'R', as_matrix, np.eye(B.shape[0]))
            m0 = pick(values, 'm0', as_vector, np.zeros(d))
            P0 = pick(values, 'P0', as_matrix, None)
            if P0 is None:
                P0 = linalg.solve_discrete_lyapunov(A, Q)
            return cls(A, Q, B, R, m0, P0)
        d = pick(values, 'd', as_int, 1)
        rho = pick(values, 'rho', as_float, 0.9)
        sigma2 = pick(values, 'sigma2', as_float, 1.0)
        obs_var = pick(values, 'obs_var', as_float, 1.0)
        if d == 1:
            return cls.scalar(rho, sigma2, obs_var)
        return cls.diagonal(d, rho, sigma2, obs_var)


class LinearGaussianModel(FeynmanKacModel):
    """Bootstrap Feynman-Kac model of a linear-Gaussian system."""
    name = 'lgss'
    has_transition_density = True

    def __init__(self, params: LinearGaussianParams, observations: Optional[np.ndarray] = None):
        self.params = params
        self.d = params.d
        self.y = None if observations is None else np.asarray(observations, dtype=np.float64).reshape(-1, params.dy)
        self.prior = GaussianKernelSpec.from_covariance(params.P0, offset=params.m0)
        self.kernel = GaussianKernelSpec.from_covariance(params.Q, transition=params.A)
        self.obs_chol = np.linalg.cholesky(params.R)
        if params.is_stable:
            spread = np.sqrt(np.diag(params.stationary_covariance()))
        else:
            spread = 5.0 * np.sqrt(np.diag(params.P0))
        self._bounds = PsiBounds.stationary(np.zeros(self.d), spread)

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

    def _log_obs(self, t, x):
        if self.y is None:
            return np.zeros(x.shape[0])
        return gaussian_logpdf(self.y[t] - x @ self.params.B.T, self.obs_chol)

    def logG0(self, x):
        return self._log_obs(0, x)

    def logGt(self, t, x_prev, x):
        return self._log_obs(t, x)

    def log_transition_density(self, t, x_prev, x):
        return gaussian_logpdf(x - x_prev @ self.params.A.T, self.kernel.chol)


def build_linear_gaussian(params: LinearGaussianParams, observations=None) -> LinearGaussianModel:
    return LinearGaussianModel(params, observations)


def simulate_linear_gaussian(params: LinearGaussianParams, T: int, seed: int):
    """(states, observations) of T+1 steps from the pseudo-random generator."""
    generator = rng_streams.stream(seed, 0, rng_streams.SIMULATION)
    L0 = np.linalg.cholesky(params.P0)
    LQ = np.linalg.cholesky(params.Q)
    LR = np.linalg.cholesky(params.R)
    x = np.empty((T + 1, params.d))
    x[0] = params.m0 + L0 @ generator.standard_normal(params.d)
    for t in range(1, T + 1):
        x[t] = params.A @ x[t - 1] + LQ @ generator.standard_normal(params.d)
    y = x @ params.B.T + generator.standard_normal((T + 1, params.dy)) @ LR.T
    return x, y


# ======================== Kalman / RTS oracle ========================

@dataclass
class KalmanResult:
    loglik: float
    loglik_path: np.ndarray
    filter_means: np.ndarray
    filter_covs: np.ndarray
    smoother_means: np.ndarray
    smoother_covs: np.ndarray


def kalman_suite(params: LinearGaussianParams, observations) -> KalmanResult:
    """
    Exact filter and smoother.

    loglik_path[t] is log p(y_{0:t}); the smoother is the RTS backward pass
    x_s[k] = x_f[k] + K_k (x_s[k+1] - A x_f[k]) with K_k = P_f[k] A^T P_pred^{-1}.
    """
    A, Q, B, R = params.A, params.Q, params.B, params.R
    y = np.asarray(observations, dtype=np.float64).reshape(-1, params.dy)
    n, d = y.shape[0], params.d

    means = np.zeros((n, d))
    covs = np.zeros((n, d, d))
    loglik_path = np.zeros(n)
    m, P = params.m0.copy(), params.P0.copy()
    total = 0.0
    for t in range(n):
        if t > 0:
            m = A @ m
            P = A @ P @ A.T + Q
        S = B @ P @ B.T + R
        S = 0.5 * (S + S.T)
        total += stats.multivariate_normal.logpdf(y[t], mean=B @ m, cov=S)
        gain = linalg.solve(S, B @ P, assume_a='pos').T
        m = m + gain @ (y[t] - B @ m)
        P = P - gain @ S @ gain.T
        P = 0.5 * (P + P.T)
        means[t], covs[t], loglik_path[t] = m, P, total

    smooth_means, smooth_covs = means.copy(), covs.copy()
    for k in range(n - 2, -1, -1):
        P_pred = A @ covs[k] @ A.T + Q
        K = linalg.solve(P_pred, A @ covs[k], assume_a='pos').T
        smooth_means[k] = means[k] + K @ (smooth_means[k + 1] - A @ means[k])
        smooth_covs[k] = covs[k] + K @ (smooth_covs[k + 1] - P_pred) @ K.T

    logger.debug("kalman loglik=%r over %d steps", total, n)
    return KalmanResult(float(total), loglik_path, means, covs, smooth_means, smooth_covs)
