"""
Neural decoding: hand kinematics x_t = (p_t, v_t) in R^4 read from the spike
counts of d_y neurons.

    v_t = v_{t-1} + N(0, sigma2 I_2),  p_t = p_{t-1} + delta v_t
    y_ti ~ Poisson(delta exp(alpha_i + beta_i . x_t)),   x_0 ~ N(0, I_4)

Only the velocities are random, so one transition consumes two uniforms.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from src.components.feynman_kac import FeynmanKacModel
from src.components.transforms import PsiBounds, norm_inv_cdf
from src.utils import rng as rng_streams
from src.utils.data_loader import as_float, as_int, as_matrix, as_vector, pick
from src.utils.errors import ModelParameterError

STATE_DIM = 4
DEFAULT_HORIZON = 23


@dataclass(frozen=True)
class NeuralDecodingParams:
    dy: int = 10
    delta: float = 0.03
    sigma2: float = 0.019
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    # seed of alpha_i ~ N(2.5, 1) and beta_i ~ U([0,1]^4) when they are not given
    coef_seed: int = 0

    def __post_init__(self):
        if not self.delta > 0 or not self.sigma2 > 0 or self.dy < 1:
            raise ModelParameterError("neural model needs delta > 0, sigma2 > 0 and dy >= 1")
        generator = rng_streams.stream(self.coef_seed, 0, rng_streams.PARAMS)
        alpha = generator.normal(2.5, 1.0, self.dy) if self.alpha is None else np.asarray(self.alpha, dtype=np.float64)
        beta = generator.random((self.dy, STATE_DIM)) if self.beta is None else np.atleast_2d(
            np.asarray(self.beta, dtype=np.float64))
        if alpha.shape != (self.dy,) or beta.shape != (self.dy, STATE_DIM):
            raise ModelParameterError(f"alpha must have {self.dy} entries and beta shape ({self.dy}, {STATE_DIM})")
        object.__setattr__(self, 'alpha', alpha)
        object.__setattr__(self, 'beta', beta)

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    @classmethod
    def from_mapping(cls, values: dict) -> 'NeuralDecodingParams':
        """Keys (under `neural.`): dy, delta, sigma2, coef_seed, alpha, beta."""
        return cls(dy=pick(values, 'dy', as_int, 10),
                   delta=pick(values, 'delta', as_float, 0.03),
                   sigma2=pick(values, 'sigma2', as_float, 0.019),
                   alpha=pick(values, 'alpha', as_vector, None),
                   beta=pick(values, 'beta', as_matrix, None),
                   coef_seed=pick(values, 'coef_seed', as_int, 0))


def neural_bounds(params: NeuralDecodingParams, horizon: int) -> PsiBounds:
    """
    Zero -/+ 2 marginal std at the horizon: Var v_T = 1 + sigma2 T and
    Var p_T ~ 1 + delta^2 (T^2 + sigma2 T^3 / 3).
    """
    T = max(horizon, 1)
    var_v = 1.0 + params.sigma2 * T
    var_p = 1.0 + params.delta ** 2 * (T ** 2 + params.sigma2 * T ** 3 / 3.0)
    std = np.sqrt(np.array([var_p, var_p, var_v, var_v]))
    return PsiBounds.stationary(np.zeros(STATE_DIM), std)


class NeuralModel(FeynmanKacModel):
    name = 'neural'
    d = STATE_DIM

    def __init__(self, params: NeuralDecodingParams, observations: Optional[np.ndarray] = None):
        self.params = params
        self.y = None if observations is None else np.asarray(observations, dtype=np.float64).reshape(-1, params.dy)
        self._log_y_factorial = None if self.y is None else gammaln(self.y + 1.0)
        self._bounds = neural_bounds(params, self.horizon or DEFAULT_HORIZON)

    @property
    def dv(self) -> int:
        return 2

    @property
    def horizon(self):
        return None if self.y is None else self.y.shape[0] - 1

    @property
    def psi_bounds(self) -> PsiBounds:
        return self._bounds

    def gamma0(self, u):
        return norm_inv_cdf(u[:, :STATE_DIM])

    def gamma_t(self, t, x_prev, v):
        velocity = x_prev[:, 2:] + self.params.sigma * norm_inv_cdf(v[:, :2])
        position = x_prev[:, :2] + self.params.delta * velocity
        return np.hstack([position, velocity])

    def _log_obs(self, t, x):
        if self.y is None:
            return np.zeros(x.shape[0])
        log_rate = np.log(self.params.delta) + self.params.alpha + x @ self.params.beta.T
        return np.sum(self.y[t] * log_rate - np.exp(log_rate) - self._log_y_factorial[t], axis=-1)

    def logG0(self, x):
        return self._log_obs(0, x)

    def logGt(self, t, x_prev, x):
        return self._log_obs(t, x)


def build_neural(params: NeuralDecodingParams = None, observations=None) -> NeuralModel:
    return NeuralModel(params or NeuralDecodingParams(), observations)


def simulate_neural(params: NeuralDecodingParams, T: int, seed: int):
    """(states (T+1, 4), spike counts (T+1, dy))."""
    generator = rng_streams.stream(seed, 0, rng_streams.SIMULATION)
    x = np.empty((T + 1, STATE_DIM))
    x[0] = generator.standard_normal(STATE_DIM)
    for t in range(1, T + 1):
        velocity = x[t - 1, 2:] + params.sigma * generator.standard_normal(2)
        x[t, 2:] = velocity
        x[t, :2] = x[t - 1, :2] + params.delta * velocity
    rate = params.delta * np.exp(params.alpha + x @ params.beta.T)
    y = generator.poisson(rate).astype(np.float64)
    return x, y
