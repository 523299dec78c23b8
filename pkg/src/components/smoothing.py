"""
Smoothing on top of the particle engines.

Forward smoothing runs the filter on an augmented chain: either (running sum
of phi, x_t) for additive functionals, or the whole path x_{0:t}. Backward
smoothing draws N_B trajectories from a stored filter run, inverting the
backward-weight CDF at the coordinates of a (T+1)-dimensional point set.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

import config
from src.components.feynman_kac import (EngineConfig, FeynmanKacModel, FilterOutput, estimate_moment,
                                        open_unit, run_filter)
from src.components.hilbert import PACKED_BITS
from src.components.lowdisc import RandomizationScheme, sobol_points
from src.components.resample import inverse_transform_labels
from src.components.transforms import PsiBounds, psi_logistic
from src.utils import rng as rng_streams
from src.utils.errors import (MissingDensityError, ResolutionOverflowError, SQMCError,
                              WeightCollapseError)
from src.utils.logger import get_logger

logger = get_logger(__name__)


def _flat(values, n: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 0:
        return np.full(n, float(values))
    return values.reshape(n)


# ======================== forward smoothing ========================

class AdditiveAugmentedModel(FeynmanKacModel):
    """z_t = (sum_{s<t} phi(x_s), x_t); the sum is carried, the rest is the base chain."""

    def __init__(self, base: FeynmanKacModel, phi: Callable, sum_bounds=(-1.0, 1.0)):
        self.base = base
        self.phi = phi
        self.name = f"{base.name}+additive"
        self.d = base.d + 1
        self._bounds = base.psi_bounds.extend(sum_bounds[0], sum_bounds[1])

    @property
    def dv(self):
        return self.base.dv

    @property
    def d0(self):
        return self.base.d0

    @property
    def horizon(self):
        return self.base.horizon

    @property
    def psi_bounds(self) -> PsiBounds:
        return self._bounds

    def gamma0(self, u):
        x = self.base.gamma0(u)
        return np.hstack([np.zeros((x.shape[0], 1)), x])

    def gamma_t(self, t, z_prev, v):
        x_prev = z_prev[:, 1:]
        running = z_prev[:, 0] + _flat(self.phi(x_prev), z_prev.shape[0])
        x = self.base.gamma_t(t, x_prev, v)
        return np.hstack([running[:, None], x])

    def logG0(self, z):
        return self.base.logG0(z[:, 1:])

    def logGt(self, t, z_prev, z):
        return self.base.logGt(t, z_prev[:, 1:], z[:, 1:])

    def total(self, z):
        return z[:, 0] + _flat(self.phi(z[:, 1:]), z.shape[0])


class PathAugmentedModel(FeynmanKacModel):
    """
    z_t = x_{0:t}, stored in a fixed (T+1)*d vector whose tail is zero.

    Only the filled part x_{0:t} is used for the Hilbert sort at time t.
    """

    def __init__(self, base: FeynmanKacModel, T: int):
        self.base = base
        self.T = T
        self.width = base.d
        self.name = f"{base.name}+path"
        self.d = (T + 1) * base.d
        self._bounds = base.psi_bounds.tile(T + 1)

    @property
    def dv(self):
        return self.base.dv

    @property
    def d0(self):
        return self.base.d0

    @property
    def horizon(self):
        return self.base.horizon

    @property
    def psi_bounds(self) -> PsiBounds:
        return self._bounds

    def _slice(self, t: int) -> slice:
        return slice(t * self.width, (t + 1) * self.width)

    def gamma0(self, u):
        x = self.base.gamma0(u)
        z = np.zeros((x.shape[0], self.d))
        z[:, self._slice(0)] = x
        return z

    def gamma_t(self, t, z_prev, v):
        z = z_prev.copy()
        z[:, self._slice(t)] = self.base.gamma_t(t, z_prev[:, self._slice(t - 1)], v)
        return z

    def logG0(self, z):
        return self.base.logG0(z[:, self._slice(0)])

    def logGt(self, t, z_prev, z):
        return self.base.logGt(t, z_prev[:, self._slice(t - 1)], z[:, self._slice(t)])

    def sort_coordinates(self, t, z):
        filled = self.d if t is None else (t + 1) * self.width
        lower, upper = self._bounds.lower[:filled], self._bounds.upper[:filled]
        return psi_logistic(z[:, :filled], PsiBounds(lower, upper))


def forward_smoothing_additive(model: FeynmanKacModel, phi: Callable, engine: EngineConfig, T: int,
                               sum_bounds=None) -> np.ndarray:
    """
    Estimates of E[sum_{s<=t} phi(x_s) | y_{0:t}] for t = 0..T.

    `sum_bounds` are the psi constants of the running-sum coordinate;
    they default to -/+(T+1).
    """
    sum_bounds = sum_bounds or (-float(T + 1), float(T + 1))
    augmented = AdditiveAugmentedModel(model, phi, sum_bounds)
    output = run_filter(augmented, T, engine, moments={'additive': augmented.total}, keep_history=False)
    return output.moments['additive'][:, 0]


def forward_smoothing_path(model: FeynmanKacModel, phi_path: Callable, engine: EngineConfig,
                           T: int) -> np.ndarray:
    """
    Estimates of E[phi_path(x_{0:t}) | y_{0:t}] for t = 0..T.

    phi_path receives an (N, t+1, d) array of paths. The Hilbert index of the
    path must fit one 64-bit word, so (T+1)*d <= 64.
    """
    if (T + 1) * model.d > PACKED_BITS:
        raise ResolutionOverflowError(f"path smoothing needs (T+1)*d <= {PACKED_BITS}, got {(T + 1) * model.d}")
    augmented = PathAugmentedModel(model, T)
    output = run_filter(augmented, T, engine, keep_history=True)
    estimates = np.empty(T + 1)
    for t in range(T + 1):
        def phi(z, t=t):
            return phi_path(z[:, :(t + 1) * model.d].reshape(z.shape[0], t + 1, model.d))
        estimates[t] = estimate_moment(output, t, phi)[0]
    return estimates


# ======================== backward smoothing ========================

@dataclass
class TrajectorySet:
    """N_B smoothing trajectories; indices point into the Hilbert-sorted particles of each t."""
    paths: np.ndarray
    indices: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def T(self) -> int:
        return self.paths.shape[1] - 1


def backward_points(n_paths: int, T: int, scheme: RandomizationScheme) -> np.ndarray:
    """
    Point set in [0,1)^(T+1) for the backward pass.

    Sobol' points when T+1 fits the provisioned dimensions, i.i.d. uniforms
    otherwise (and always for scheme kind 'iid').
    """
    if scheme.kind == 'iid' or T + 1 > config.SOBOL_MAX_DIM:
        if scheme.kind != 'iid':
            logger.info("backward pass in dimension %d uses i.i.d. uniforms", T + 1)
        seed = scheme.seed if scheme.kind == 'iid' else rng_streams.derive_seed(scheme.seed, rng_streams.SMOOTHING)
        return sobol_points(n_paths, T + 1, RandomizationScheme('iid', seed)).values
    return sobol_points(n_paths, T + 1, scheme).values


def backward_weights(output: FilterOutput, model: FeynmanKacModel, t: int, x_next: np.ndarray) -> np.ndarray:
    """
    Normalised backward weights of the time-t particles, one row per state
    in `x_next`: W_t^m m_{t+1}(x_{t+1} | x_t^m), times G_{t+1} when the
    potential reads x_t.
    """
    particles = output.states[t]
    n, d = particles.shape
    k = x_next.shape[0]
    x_prev = np.broadcast_to(particles[None, :, :], (k, n, d))
    x_next = np.broadcast_to(x_next[:, None, :], (k, n, d))
    with np.errstate(divide='ignore'):
        logw = np.log(output.W[t])[None, :] + model.log_transition_density(t + 1, x_prev, x_next)
    if model.weight_depends_on_prev:
        logw = logw + model.logGt(t + 1, x_prev, x_next)
    norm = logsumexp(logw, axis=1, keepdims=True)
    if not np.all(np.isfinite(norm)):
        logger.error("backward weights vanish at t=%d", t)
        raise WeightCollapseError(t, f"a backward normalizer is zero at t={t}")
    return np.exp(logw - norm)


def backward_pass(output: FilterOutput, model: FeynmanKacModel, n_paths: int,
                  scheme: Optional[RandomizationScheme] = None) -> TrajectorySet:
    """
    Backward step of SQMC smoothing.

    Final states come from inverting W_T at the sorted first coordinate (order
    tau); then for t = T-1..0 trajectory n picks x_t by inverting its
    backward weights W_t^m m_{t+1}(x_{t+1} | x_t^m) (times G_{t+1} when the
    potential reads x_t) at coordinate T-t of point tau(n).
    """
    if not model.has_transition_density:
        raise MissingDensityError(f"model '{model.name}' has no transition density")
    if not output.keep_history:
        raise SQMCError("backward smoothing needs a filter run with keep_history=True")
    scheme = scheme or RandomizationScheme('owen-nested', output.metadata.get('seed', 0))
    T = output.T
    u = open_unit(backward_points(n_paths, T, scheme))
    tau = np.argsort(u[:, 0], kind='stable')
    u = u[tau]

    d = output.states[T].shape[1]
    paths = np.empty((n_paths, T + 1, d))
    indices = np.empty((n_paths, T + 1), dtype=np.int64)
    indices[:, T] = inverse_transform_labels(u[:, 0], output.W[T])
    paths[:, T] = output.states[T][indices[:, T]]

    for t in range(T - 1, -1, -1):
        particles = output.states[t]
        n = particles.shape[0]
        cdf = np.cumsum(backward_weights(output, model, t, paths[:, t + 1]), axis=1)
        picked = np.sum(cdf < u[:, T - t][:, None], axis=1)
        indices[:, t] = np.minimum(picked, n - 1)
        paths[:, t] = particles[indices[:, t]]

    return TrajectorySet(paths, indices)


def smoothed_moment(trajectories: TrajectorySet, t: int, phi: Callable = None) -> np.ndarray:
    """Average of phi(x_t) over the trajectories (phi defaults to the identity)."""
    if not 0 <= t <= trajectories.T:
        raise SQMCError(f"t={t} is outside 0..{trajectories.T}")
    x = trajectories.paths[:, t]
    values = x if phi is None else np.asarray(phi(x), dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    return values.mean(axis=0)


def backward_smoothing(model: FeynmanKacModel, T: int, engine: EngineConfig, n_paths: int,
                       phi: Callable = None):
    """
    Filter, backward pass and smoothed moments in one call.

    Returns (per-t smoothed estimates of shape (T+1, k), TrajectorySet). SQMC
    runs smooth with a fresh randomization of the engine's scheme, SMC runs
    with i.i.d. uniforms.
    """
    output = run_filter(model, T, engine, keep_history=True)
    if engine.engine == 'sqmc':
        scheme = engine.scheme.for_step(engine.seed, T + 1)
    else:
        scheme = RandomizationScheme('iid', rng_streams.derive_seed(engine.seed, rng_streams.SMOOTHING))
    trajectories = backward_pass(output, model, n_paths, scheme)
    estimates = np.vstack([smoothed_moment(trajectories, t, phi) for t in range(T + 1)])
    return estimates, trajectories
