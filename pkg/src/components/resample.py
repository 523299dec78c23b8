"""
Resampling primitives.

Labels are 0-based ancestor indices. `inverse_transform_labels` is the single
linear scan over sorted uniforms and cumulative weights; multinomial and
systematic resampling are that scan fed with the right uniforms.
"""
import numba
import numpy as np

from src.utils import rng as rng_streams
from src.utils.errors import UnsortedInputError, WeightInvariantError

WEIGHT_TOLERANCE = 1e-12


@numba.njit(cache=True)
def _scan(su, W):
    """a[n] = smallest m with W[0] + ... + W[m] >= su[n], su nondecreasing."""
    n_out = su.shape[0]
    last = W.shape[0] - 1
    labels = np.empty(n_out, dtype=np.int64)
    m = 0
    s = W[0]
    for n in range(n_out):
        while s < su[n] and m < last:
            m += 1
            s += W[m]
        labels[n] = m
    return labels


def check_weights(W) -> np.ndarray:
    """Validates a normalised weight vector and returns it as float64."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 1 or W.size == 0:
        raise WeightInvariantError("weights must be a non-empty vector")
    if np.any(~np.isfinite(W)) or np.any(W < 0.0):
        raise WeightInvariantError("weights must be finite and nonnegative")
    if not np.any(W > 0.0):
        raise WeightInvariantError("all weights are zero")
    if abs(W.sum() - 1.0) > WEIGHT_TOLERANCE * max(1, W.size):
        raise WeightInvariantError(f"weights sum to {W.sum()!r}, not 1")
    return W


def inverse_transform_labels(sorted_u, W) -> np.ndarray:
    """
    Ancestor labels by inversion of the weight CDF at sorted uniforms.

    A uniform that lands exactly on a cumulative weight picks that particle;
    rounding in the last partial sum is absorbed by the final particle.
    """
    su = np.ascontiguousarray(sorted_u, dtype=np.float64)
    if su.ndim != 1:
        raise UnsortedInputError("uniforms must be a vector")
    if su.size > 1 and np.any(np.diff(su) < 0.0):
        raise UnsortedInputError("uniforms must be nondecreasing")
    W = np.ascontiguousarray(check_weights(W))
    if su.size == 0:
        return np.empty(0, dtype=np.int64)
    return _scan(su, W)


def sorted_uniforms(n: int, seed) -> np.ndarray:
    """
    n sorted uniforms in O(n) by normalised exponential spacings.

    The cumulative sums of n+1 exponentials, divided by their total, are the
    order statistics of n uniforms.
    """
    generator = rng_streams.as_generator(seed)
    spacings = generator.standard_exponential(n + 1)
    cumulative = np.cumsum(spacings)
    u = cumulative[:-1] / cumulative[-1]
    return np.minimum(u, np.nextafter(1.0, 0.0))


def multinomial_labels(W, seed) -> np.ndarray:
    W = check_weights(W)
    return inverse_transform_labels(sorted_uniforms(W.size, seed), W)


def systematic_labels(W, u0: float) -> np.ndarray:
    """Labels at the stratified grid (n + u0)/N, n = 0..N-1."""
    W = check_weights(W)
    if not 0.0 <= u0 < 1.0:
        raise WeightInvariantError("u0 must lie in [0, 1)")
    n = W.size
    return inverse_transform_labels((np.arange(n) + u0) / n, W)


def offspring_counts(labels, n: int) -> np.ndarray:
    return np.bincount(np.asarray(labels, dtype=np.int64), minlength=n)


def particle_ess(W) -> float:
    """1 / sum(W^2) of normalised weights."""
    W = np.asarray(W, dtype=np.float64)
    return float(1.0 / np.sum(np.square(W)))
