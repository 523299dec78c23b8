"""
The univariate non-linear benchmark:

    x_t = b1 x_{t-1} + b2 x_{t-1} / (1 + x_{t-1}^2) + b3 cos(b4 t) + sigma nu_t
    y_t = x_t^2 / a + eps_t,   nu_t, eps_t ~ N(0, 1),   x_0 ~ N(0, prior_var)
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from src.components.feynman_kac import FeynmanKacModel
from src.components.transforms import PsiBounds, gaussian_logpdf, norm_inv_cdf
from src.utils import rng as rng_streams
from src.utils.data_loader import as_float, as_vector, pick
from src.utils.errors import ModelParameterError

PILOT_STEPS = 10_000
PILOT_MARGIN = 0.1


@dataclass(frozen=True)
class ToyUnivariateParams:
    a: float = 20.0
    b: Tuple[float, float, float, float] = (0.5, 25.0, 8.0, 1.2)
    sigma2: float = 10.0
    prior_var: float = 2.0
    # starting point of simulated data
    x0: float = 0.1

    def __post_init__(self):
        b = tuple(float(v) for v in self.b)
        if len(b) != 4:
            raise ModelParameterError("toy model needs exactly four b coefficients")
        if not self.a > 0 or not self.sigma2 > 0 or not self.prior_var > 0:
            raise ModelParameterError("toy model needs a > 0, sigma2 > 0 and prior_var > 0")
        object.__setattr__(self, 'b', b)

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    def drift(self, t: int, x: np.ndarray) -> np.ndarray:
        b1, b2, b3, b4 = self.b
        return b1 * x + b2 * x / (1.0 + x * x) + b3 * np.cos(b4 * t)

    @classmethod
    def from_mapping(cls, values: dict) -> 'ToyUnivariateParams':
        """Keys (under `toy.`): a, b (four comma separated values), sigma2, prior_var, x0."""
        defaults = cls()
        b = pick(values, 'b', as_vector, np.array(defaults.b))
        return cls(a=pick(values, 'a', as_float, defaults.a), b=tuple(b),
                   sigma2=pick(values, 'sigma2', as_float, defaults.sigma2),
                   prior_var=pick(values, 'prior_var', as_float, defaults.prior_var),
                   x0=pick(values, 'x0', as_float, defaults.x0))


@lru_cache(maxsize=16)
def pilot_bounds(params: ToyUnivariateParams, steps: int = PILOT_STEPS, seed: int = 0) -> PsiBounds:
    """Range of a long simulated state path, widened by 10% on each side."""
    x, _ = simulate_toy(params, steps, seed)
    return PsiBounds.from_range(x.min(), x.max(), PILOT_MARGIN)


class ToyModel(FeynmanKacModel):
    name = 'toy'
    d = 1
    has_transition_density = True

    def __init__(self, params: ToyUnivariateParams, observations: Optional[np.ndarray] = None,
                 bounds: Optional[PsiBounds] = None):
        self.params = params
        self.y = None if observations is None else np.asarray(observations, dtype=np.float64).reshape(-1)
        self._bounds = bounds or pilot_bounds(params)
        self._obs_chol = np.eye(1)

    @property
    def horizon(self):
        return None if self.y is None else self.y.size - 1

    @property
    def psi_bounds(self) -> PsiBounds:
        return self._bounds

    def gamma0(self, u):
        return np.sqrt(self.params.prior_var) * norm_inv_cdf(u[:, :1])

    def gamma_t(self, t, x_prev, v):
        return self.params.drift(t, x_prev) + self.params.sigma * norm_inv_cdf(v[:, :1])

    def _log_obs(self, t, x):
        if self.y is None:
            return np.zeros(x.shape[0])
        return gaussian_logpdf((self.y[t] - x * x / self.params.a), self._obs_chol)

    def logG0(self, x):
        return self._log_obs(0, x)

    def logGt(self, t, x_prev, x):
        return self._log_obs(t, x)

    def log_transition_density(self, t, x_prev, x):
        residual = (x - self.params.drift(t, x_prev)) / self.params.sigma
        return gaussian_logpdf(residual, self._obs_chol) - np.log(self.params.sigma)


def build_toy(params: ToyUnivariateParams = None, observations=None) -> ToyModel:
    return ToyModel(params or ToyUnivariateParams(), observations)


def simulate_toy(params: ToyUnivariateParams, T: int, seed: int):
    """(states, observations) of shape (T+1, 1), started at params.x0."""
    generator = rng_streams.stream(seed, 0, rng_streams.SIMULATION)
    nu = generator.standard_normal(T + 1)
    eps = generator.standard_normal(T + 1)
    x = np.empty(T + 1)
    x[0] = params.x0
    for t in range(1, T + 1):
        x[t] = params.drift(t, x[t - 1]) + params.sigma * nu[t]
    y = x * x / params.a + eps
    return x[:, None], y[:, None]
