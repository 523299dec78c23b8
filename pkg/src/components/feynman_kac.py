"""
Feynman-Kac models and the two particle engines.

`smc_run` is the basic particle filter with multinomial or systematic
resampling driven by Philox streams. `sqmc_run` replaces each step's
pseudo-random vectors by a (randomized) Sobol' point set in dimension 1+d_v
and picks ancestors by inverting the weight CDF of the Hilbert-sorted
particles at the sorted first coordinate of the points.

Weights live in log space; logZ accumulates the log of each step's mean
unnormalised weight, so the partial evidence log Z_t is available for every t.
"""
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.special import logsumexp

import config
from src.components.hilbert import hilbert_sort, resolve_resolution
from src.components.lowdisc import RandomizationScheme, sobol_points
from src.components.resample import (inverse_transform_labels, multinomial_labels,
                                     particle_ess, systematic_labels)
from src.components.transforms import PsiBounds, psi_logistic
from src.utils import rng as rng_streams
from src.utils.errors import MissingDensityError, SQMCError, WeightCollapseError
from src.utils.logger import get_logger

logger = get_logger(__name__)

RESAMPLERS = ('multinomial', 'systematic')
ENGINES = ('smc', 'sqmc')
# uniforms handed to the Gamma maps stay inside the open unit cube
UNIFORM_EPS = 2.0 ** -53


class FeynmanKacModel(ABC):
    """
    A Markov chain written as uniform-to-state maps plus log potentials.

    gamma0(u) with u of shape (N, d0) and gamma_t(t, x_prev, v) with v of
    shape (N, dv) return (N, d) states; logG0/logGt return (N,) log weights
    (-inf meaning zero weight).
    """
    name = 'model'
    d: int = 1
    has_transition_density = False
    # G_t reads x_{t-1} as well as x_t (backward smoothing then reweights by it)
    weight_depends_on_prev = False

    @property
    def dv(self) -> int:
        """Randomness dimension of one transition."""
        return self.d

    @property
    def d0(self) -> int:
        """Randomness dimension of the initial law."""
        return self.d

    @property
    def horizon(self) -> Optional[int]:
        """Last time index with data, or None for an unbounded chain."""
        return None

    @property
    @abstractmethod
    def psi_bounds(self) -> PsiBounds:
        ...

    @abstractmethod
    def gamma0(self, u: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def gamma_t(self, t: int, x_prev: np.ndarray, v: np.ndarray) -> np.ndarray:
        ...

    def logG0(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(x.shape[0])

    def logGt(self, t: int, x_prev: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.zeros(x.shape[0])

    def log_transition_density(self, t: int, x_prev: np.ndarray, x: np.ndarray) -> np.ndarray:
        """log m_t(x | x_prev), broadcasting over the leading axes."""
        raise MissingDensityError(f"model '{self.name}' has no transition density")

    def psi(self, x: np.ndarray) -> np.ndarray:
        return psi_logistic(x, self.psi_bounds)

    def sort_coordinates(self, t: Optional[int], x: np.ndarray) -> np.ndarray:
        """Points of the unit cube the particles are Hilbert-sorted by at time t."""
        return self.psi(x)


@dataclass
class ParticleSystem:
    t: int
    states: np.ndarray
    logw: np.ndarray
    W: np.ndarray
    logZ: float


@dataclass
class FilterOutput:
    """
    Result of one filter run.

    `states[t]` and `W[t]` are stored in Hilbert order (sorted by psi of the
    states); with keep_history=False only the final time is kept.
    """
    engine: str
    N: int
    T: int
    states: List[np.ndarray]
    W: List[np.ndarray]
    logZ: np.ndarray
    ess: np.ndarray
    step_ns: np.ndarray
    moments: Dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    keep_history: bool = True
    final: Optional[ParticleSystem] = None

    def _slot(self, t: int) -> int:
        if not 0 <= t <= self.T:
            raise SQMCError(f"t={t} is outside the horizon 0..{self.T}")
        if self.keep_history:
            return t
        if t != self.T:
            raise SQMCError("history was not kept; only the final time is available")
        return 0

    def states_at(self, t: int) -> np.ndarray:
        return self.states[self._slot(t)]

    def weights_at(self, t: int) -> np.ndarray:
        return self.W[self._slot(t)]


@dataclass(frozen=True)
class EngineConfig:
    """Everything a filter run needs besides the model and the horizon."""
    engine: str = 'sqmc'
    N: int = 1024
    seed: int = 0
    scheme: RandomizationScheme = field(default_factory=lambda: RandomizationScheme(config.DEFAULT_SCHEME))
    hilbert_m: object = 'default'
    resampler: str = 'systematic'

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise SQMCError(f"unknown engine '{self.engine}'")
        if self.resampler not in RESAMPLERS:
            raise SQMCError(f"unknown resampler '{self.resampler}'")


def run_filter(model: FeynmanKacModel, T: int, engine: EngineConfig, moments=None,
               keep_history: bool = True, raise_on_collapse: bool = True) -> FilterOutput:
    if engine.engine == 'smc':
        return smc_run(model, engine.N, T, engine.resampler, engine.seed, moments=moments,
                       keep_history=keep_history, raise_on_collapse=raise_on_collapse,
                       hilbert_m=engine.hilbert_m)
    return sqmc_run(model, engine.N, T, engine.scheme, engine.hilbert_m, engine.seed, moments=moments,
                    keep_history=keep_history, raise_on_collapse=raise_on_collapse)


# ======================== shared machinery ========================

def hilbert_order(model: FeynmanKacModel, x: np.ndarray, m='default', t: Optional[int] = None) -> np.ndarray:
    """sigma: Hilbert order of psi(x); a plain stable sort of x when d = 1."""
    if x.shape[1] == 1:
        return np.argsort(x[:, 0], kind='stable')
    coords = model.sort_coordinates(t, x)
    if coords.shape[1] == 1:
        return np.argsort(coords[:, 0], kind='stable')
    return hilbert_sort(coords, m)


def open_unit(u: np.ndarray) -> np.ndarray:
    return np.clip(u, UNIFORM_EPS, 1.0 - UNIFORM_EPS)


def _as_states(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def _phi_values(phi: Callable, x: np.ndarray, W: np.ndarray) -> np.ndarray:
    values = np.asarray(phi(x), dtype=np.float64)
    if values.ndim == 0:
        values = np.full(x.shape[0], float(values))
    if values.ndim == 1:
        values = values[:, None]
    return np.atleast_1d(W @ values)


class _Recorder:
    """Collects what a run reports, one time step at a time."""

    def __init__(self, model, N, T, moments, keep_history, hilbert_m):
        self.model = model
        self.N = N
        self.T = T
        self.moments = dict(moments or {})
        self.keep_history = keep_history
        self.hilbert_m = hilbert_m
        self.logZ = np.full(T + 1, -np.inf)
        self.ess = np.zeros(T + 1)
        self.step_ns = np.zeros(T + 1, dtype=np.int64)
        self.moment_rows = {name: [] for name in self.moments}
        self.states = []
        self.W = []
        self.running = 0.0
        self.collapsed_at = None

    def weigh(self, t: int, logw: np.ndarray, raise_on_collapse: bool):
        logw = np.where(np.isnan(logw), -np.inf, logw)
        if not np.any(np.isfinite(logw)) or np.max(logw) == np.inf:
            if raise_on_collapse:
                logger.error("weight collapse at t=%d (N=%d)", t, self.N)
                raise WeightCollapseError(t)
            self.collapsed_at = t
            return None
        log_total = logsumexp(logw)
        W = np.exp(logw - log_total)
        self.running += float(log_total - np.log(self.N))
        self.logZ[t] = self.running
        self.ess[t] = particle_ess(W)
        return W

    def record(self, t: int, x: np.ndarray, W: np.ndarray, order: Optional[np.ndarray]):
        for name, phi in self.moments.items():
            self.moment_rows[name].append(_phi_values(phi, x, W))
        if self.keep_history or t == self.T:
            if order is None:
                order = hilbert_order(self.model, x, self.hilbert_m, t)
            if not self.keep_history:
                self.states, self.W = [], []
            self.states.append(x[order])
            self.W.append(W[order])

    def finish(self, engine, logw, x, W, metadata) -> FilterOutput:
        moments = {}
        for name, rows in self.moment_rows.items():
            block = np.full((self.T + 1, rows[0].size if rows else 1), np.nan)
            if rows:
                block[:len(rows)] = np.vstack(rows)
            moments[name] = block
        if self.collapsed_at is not None:
            metadata['collapsed_at'] = self.collapsed_at
        final = None
        if W is not None:
            final = ParticleSystem(self.T, x, logw, W, float(self.logZ[self.T]))
        return FilterOutput(engine=engine, N=self.N, T=self.T, states=self.states, W=self.W,
                            logZ=self.logZ, ess=self.ess, step_ns=self.step_ns, moments=moments,
                            metadata=metadata, keep_history=self.keep_history, final=final)


def _check_run(model: FeynmanKacModel, N: int, T: int):
    if N < 1:
        raise SQMCError("N must be at least 1")
    if T < 0:
        raise SQMCError("T must be nonnegative")
    if model.horizon is not None and T > model.horizon:
        raise SQMCError(f"T={T} exceeds the data horizon {model.horizon} of '{model.name}'")


# ======================== engines ========================

def smc_run(model: FeynmanKacModel, N: int, T: int, resampler: str = 'systematic', seed: int = 0,
            moments=None, keep_history: bool = True, raise_on_collapse: bool = True,
            hilbert_m='default') -> FilterOutput:
    """
    Basic particle filter: resample every step, propagate, reweight.

    Step t draws from the Philox stream (seed, t), so any step can be replayed
    on its own.
    """
    _check_run(model, N, T)
    if resampler not in RESAMPLERS:
        raise SQMCError(f"unknown resampler '{resampler}'")
    logger.debug("smc start model=%s N=%d T=%d resampler=%s seed=%d", model.name, N, T, resampler, seed)
    rec = _Recorder(model, N, T, moments, keep_history, hilbert_m)

    start = time.perf_counter_ns()
    generator = rng_streams.stream(seed, 0, rng_streams.SMC_STEP)
    x = _as_states(model.gamma0(open_unit(generator.random((N, model.d0)))))
    logw = np.asarray(model.logG0(x), dtype=np.float64)
    W = rec.weigh(0, logw, raise_on_collapse)
    if W is not None:
        rec.record(0, x, W, None)
    rec.step_ns[0] = time.perf_counter_ns() - start

    for t in range(1, T + 1):
        if W is None:
            break
        start = time.perf_counter_ns()
        generator = rng_streams.stream(seed, t, rng_streams.SMC_STEP)
        if resampler == 'multinomial':
            labels = multinomial_labels(W, generator)
        else:
            labels = systematic_labels(W, float(generator.random()))
        v = open_unit(generator.random((N, model.dv)))
        x_prev = x[labels]
        x = _as_states(model.gamma_t(t, x_prev, v))
        logw = np.asarray(model.logGt(t, x_prev, x), dtype=np.float64)
        W = rec.weigh(t, logw, raise_on_collapse)
        if W is not None:
            rec.record(t, x, W, None)
        rec.step_ns[t] = time.perf_counter_ns() - start

    metadata = {'engine': 'smc', 'resampler': resampler, 'seed': int(seed), 'model': model.name}
    logger.debug("smc done model=%s logZ_T=%r", model.name, rec.logZ[T])
    return rec.finish('smc', logw, x, W, metadata)


def sqmc_run(model: FeynmanKacModel, N: int, T: int, scheme: RandomizationScheme = None,
             hilbert_m='default', seed: int = 0, moments=None, keep_history: bool = True,
             raise_on_collapse: bool = True) -> FilterOutput:
    """
    Sequential quasi-Monte Carlo filter.

    Each step t >= 1 draws N points in [0,1)^(1+dv) (randomized independently
    per step through `scheme.for_step(seed, t)`), sorts them by their first
    coordinate (tau), sorts the particles along the Hilbert curve (sigma) and
    takes ancestors by inverse transform of the sorted weights. N need not be
    a power of 2, though Sobol' points are best balanced when it is.
    """
    _check_run(model, N, T)
    scheme = scheme or RandomizationScheme(config.DEFAULT_SCHEME)
    logger.debug("sqmc start model=%s N=%d T=%d scheme=%s seed=%d", model.name, N, T, scheme.kind, seed)
    rec = _Recorder(model, N, T, moments, keep_history, hilbert_m)

    start = time.perf_counter_ns()
    u0 = open_unit(sobol_points(N, model.d0, scheme.for_step(seed, 0)).values)
    x = _as_states(model.gamma0(u0))
    logw = np.asarray(model.logG0(x), dtype=np.float64)
    W = rec.weigh(0, logw, raise_on_collapse)
    sigma = None
    if W is not None:
        sigma = hilbert_order(model, x, hilbert_m, 0)
        rec.record(0, x, W, sigma)
    rec.step_ns[0] = time.perf_counter_ns() - start

    for t in range(1, T + 1):
        if W is None:
            break
        start = time.perf_counter_ns()
        u = open_unit(sobol_points(N, 1 + model.dv, scheme.for_step(seed, t)).values)
        tau = np.argsort(u[:, 0], kind='stable')
        labels = inverse_transform_labels(u[tau, 0], W[sigma])
        x_prev = x[sigma][labels]
        x = _as_states(model.gamma_t(t, x_prev, u[tau, 1:]))
        logw = np.asarray(model.logGt(t, x_prev, x), dtype=np.float64)
        W = rec.weigh(t, logw, raise_on_collapse)
        if W is not None:
            sigma = hilbert_order(model, x, hilbert_m, t)
            rec.record(t, x, W, sigma)
        rec.step_ns[t] = time.perf_counter_ns() - start

    metadata = {'engine': 'sqmc', 'scheme': scheme.kind, 'scheme_seed': scheme.seed, 'seed': int(seed),
                'hilbert_m': hilbert_m, 'model': model.name}
    if model.d > 1 and W is not None:
        metadata['resolved_m'] = resolve_resolution(model.sort_coordinates(T, x), hilbert_m)
    logger.debug("sqmc done model=%s logZ_T=%r", model.name, rec.logZ[T])
    return rec.finish('sqmc', logw, x, W, metadata)


# ======================== estimates ========================

def estimate_moment(output: FilterOutput, t: int, phi: Callable) -> np.ndarray:
    """sum_n W_t^n phi(x_t^n)."""
    return _phi_values(phi, output.states_at(t), output.weights_at(t))


def log_evidence(output: FilterOutput, t: int = None) -> float:
    """log Z_t^N; -inf after a weight collapse."""
    t = output.T if t is None else t
    if not 0 <= t <= output.T:
        raise SQMCError(f"t={t} is outside the horizon 0..{output.T}")
    return float(output.logZ[t])
