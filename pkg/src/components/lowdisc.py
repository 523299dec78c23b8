"""
Low-discrepancy point sets.

Unscrambled Sobol' points come from scipy (Joe-Kuo direction numbers); the
randomizations are applied here on the 53-bit integer form of the points so
that the float conversion `k / 2**53` is exact and strictly below 1.
"""
import functools
import itertools
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import qmc

import config
from src.utils import rng as rng_streams
from src.utils.errors import (DimensionExceedsTableError, ModeMismatchError, SQMCError,
                              ZeroCountError)
from src.utils.logger import get_logger

logger = get_logger(__name__)

FRACTION_BITS = 53
SOBOL_BITS = 32
_UNIT = 2.0 ** -FRACTION_BITS

SCHEME_KINDS = ('none', 'digital-shift', 'owen-nested', 'iid')
_ALIASES = {'shift': 'digital-shift', 'owen': 'owen-nested', 'random': 'iid'}

DISCREPANCY_MODES = ('exact-1d', 'grid-exact', 'sample-estimate')
GRID_EXACT_MAX_DIM = 3
GRID_EXACT_MAX_N = 2 ** 10


@dataclass(frozen=True)
class RandomizationScheme:
    """How a point set is randomized. `kind='none'` ignores the seed."""
    kind: str = 'owen-nested'
    seed: int = 0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in SCHEME_KINDS:
            raise SQMCError(f"unknown randomization scheme '{self.kind}'")
        object.__setattr__(self, 'kind', kind)
        object.__setattr__(self, 'seed', int(self.seed) & rng_streams.MASK64)

    @property
    def is_random(self) -> bool:
        return self.kind != 'none'

    def for_step(self, run_seed: int, t: int) -> 'RandomizationScheme':
        """Independent randomization for time step t of the run `run_seed`."""
        if not self.is_random:
            return self
        return RandomizationScheme(self.kind, rng_streams.derive_seed(self.seed, run_seed, t))


@dataclass(frozen=True)
class PointSet:
    """An n x d array of values in [0, 1)."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise SQMCError("a point set is a 2-d array")
        if values.size and (values.min() < 0.0 or values.max() >= 1.0):
            raise SQMCError("point set values must lie in [0, 1)")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, columns=[f"u{j}" for j in range(self.d)])

    def to_csv(self, path):
        """One row per point, shortest round-trip decimal text."""
        self.to_frame().to_csv(path, index=False, float_format='%r')


# ======================== Sobol' points ========================

@functools.lru_cache(maxsize=32)
def _sobol_integers(n: int, d: int) -> np.ndarray:
    sampler = qmc.Sobol(d=d, scramble=False, bits=SOBOL_BITS)
    with warnings.catch_warnings():
        # scipy warns when n is not a power of 2
        warnings.simplefilter('ignore', UserWarning)
        points = sampler.random(n)
    logger.debug("base Sobol integers n=%d d=%d", n, d)
    ints = np.ldexp(points, SOBOL_BITS).astype(np.uint64) << np.uint64(FRACTION_BITS - SOBOL_BITS)
    ints.setflags(write=False)
    return ints


def _mix_array(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorised (uint64 arithmetic wraps)."""
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _distinct_depth(column: np.ndarray) -> int:
    """Smallest digit depth at which every point sits in its own dyadic node."""
    if column.size < 2:
        return 0
    ordered = np.sort(column)
    diff = ordered[1:] ^ ordered[:-1]
    if np.any(diff == 0):
        return FRACTION_BITS
    highest_bit = np.frexp(diff.astype(np.float64))[1] - 1
    return int(FRACTION_BITS - highest_bit.min())


def _owen_scramble(ints: np.ndarray, seed: int) -> np.ndarray:
    """
    Nested uniform scrambling in base 2.

    The flip applied to digit k of a point is one bit of a keyed hash of
    (seed, coordinate, k, first k digits), i.e. one random bit per node of the
    digit tree, generated on demand. Below the depth where every point owns its
    node, the remaining digits of the path come from one hash of that node.
    """
    out = np.empty_like(ints)
    with np.errstate(over='ignore'):
        for j in range(ints.shape[1]):
            column = ints[:, j]
            key = rng_streams.derive_seed(seed, j)
            flips = np.zeros(column.shape, dtype=np.uint64)
            depth = _distinct_depth(column)
            for k in range(depth):
                prefix = column >> np.uint64(FRACTION_BITS - k)
                h = _mix_array(prefix ^ np.uint64(rng_streams.derive_seed(key, k)))
                flips |= (h >> np.uint64(63)) << np.uint64(FRACTION_BITS - 1 - k)
            if depth < FRACTION_BITS:
                prefix = column >> np.uint64(FRACTION_BITS - depth)
                tail = _mix_array(prefix ^ np.uint64(rng_streams.derive_seed(key, FRACTION_BITS + 1)))
                flips |= tail & np.uint64((1 << (FRACTION_BITS - depth)) - 1)
            out[:, j] = column ^ flips
    return out


def _digital_shift(ints: np.ndarray, seed: int) -> np.ndarray:
    generator = rng_streams.stream(seed, purpose=rng_streams.POINTS)
    shifts = generator.integers(0, 1 << FRACTION_BITS, size=ints.shape[1], dtype=np.uint64)
    return ints ^ shifts[None, :]


def sobol_points(n: int, d: int, scheme: RandomizationScheme = None) -> PointSet:
    """
    First n points of the d-dimensional Sobol' sequence, randomized per scheme.

    kind='iid' returns pseudo-random uniforms instead (test hook and fallback
    for dimensions where QMC is not worth it).
    """
    scheme = scheme or RandomizationScheme('none')
    if n < 1:
        raise ZeroCountError("a point set needs at least one point")
    if d < 1 or d > config.SOBOL_MAX_DIM:
        raise DimensionExceedsTableError(
            f"Sobol' direction numbers are provisioned for 1 <= d <= {config.SOBOL_MAX_DIM}, got d={d}")
    if n > 2 ** SOBOL_BITS:
        raise SQMCError(f"at most 2^{SOBOL_BITS} Sobol' points are available")

    if scheme.kind == 'iid':
        generator = rng_streams.stream(scheme.seed, purpose=rng_streams.POINTS)
        return PointSet(generator.random((n, d)))

    ints = _sobol_integers(int(n), int(d))
    if scheme.kind == 'digital-shift':
        ints = _digital_shift(ints, scheme.seed)
    elif scheme.kind == 'owen-nested':
        ints = _owen_scramble(ints, scheme.seed)
    return PointSet(ints.astype(np.float64) * _UNIT)


def uniform_points(n: int, d: int, seed: int) -> PointSet:
    """Pseudo-random point set (the Monte Carlo counterpart of sobol_points)."""
    return sobol_points(n, d, RandomizationScheme('iid', seed))


# ======================== Star discrepancy ========================

def _exact_1d(values: np.ndarray) -> float:
    u = np.sort(values[:, 0])
    n = u.size
    i = np.arange(1, n + 1)
    return float(np.max(np.maximum(i / n - u, u - (i - 1) / n)))


def _grid_counts(points: np.ndarray, grids, closed: bool) -> np.ndarray:
    """
    Number of points in [0, c) (or [0, c] when closed) for every corner c of
    the product of `grids`, via a rank histogram summed along each axis.
    """
    side = 'left' if closed else 'right'
    counts = np.zeros(tuple(len(g) for g in grids), dtype=np.int64)
    ranks = tuple(np.searchsorted(g, points[:, j], side=side) for j, g in enumerate(grids))
    np.add.at(counts, ranks, 1)
    for axis in range(len(grids)):
        counts = np.cumsum(counts, axis=axis)
    return counts


def _grid_exact(values: np.ndarray) -> float:
    """
    Supremum over origin-anchored boxes whose upper corner lies on the grid of
    point coordinates (plus 1). Open counts give the volume excess, closed
    counts the mass excess. The last two axes are counted in one pass per
    corner of the leading axis.
    """
    n, d = values.shape
    grids = [np.append(np.unique(values[:, j]), 1.0) for j in range(d)]
    k = min(d, 2)
    head_grids, tail_grids = grids[:d - k], grids[d - k:]
    tail_volume = functools.reduce(np.multiply.outer, tail_grids)
    worst = 0.0
    for corner in itertools.product(*head_grids):
        corner = np.asarray(corner, dtype=np.float64)
        head = values[:, :d - k]
        open_points = values[np.all(head < corner, axis=1), d - k:]
        closed_points = values[np.all(head <= corner, axis=1), d - k:]
        volume = float(np.prod(corner)) * tail_volume
        open_counts = _grid_counts(open_points, tail_grids, closed=False)
        closed_counts = _grid_counts(closed_points, tail_grids, closed=True)
        local = max(np.max(volume - open_counts / n), np.max(closed_counts / n - volume))
        worst = max(worst, float(local))
    return worst


def _sample_estimate(values: np.ndarray, samples: int, seed: int) -> float:
    n, d = values.shape
    generator = rng_streams.stream(seed, purpose=rng_streams.DISCREPANCY)
    worst = 0.0
    chunk = max(1, 2 ** 22 // max(1, n * d))
    remaining = samples
    while remaining > 0:
        size = min(chunk, remaining)
        anchors = generator.random((size, d))
        inside = np.all(values[None, :, :] < anchors[:, None, :], axis=2)
        deviation = np.abs(inside.mean(axis=1) - np.prod(anchors, axis=1))
        worst = max(worst, float(deviation.max()))
        remaining -= size
    return worst


def star_discrepancy(ps, mode: str = 'exact-1d', samples: int = 10_000, seed: int = 0) -> float:
    """
    Star discrepancy D*(u^{1:N}).

    `exact-1d` uses the sorted closed form (d=1 only); `grid-exact` enumerates
    grid corners (small N and d only); `sample-estimate` returns a lower bound
    from `samples` random anchor boxes.
    """
    values = ps.values if isinstance(ps, PointSet) else PointSet(ps).values
    n, d = values.shape
    if n == 0:
        raise ZeroCountError("empty point set")
    if mode == 'exact-1d':
        if d != 1:
            raise ModeMismatchError("exact-1d requires a one-dimensional point set")
        return _exact_1d(values)
    if mode == 'grid-exact':
        if d > GRID_EXACT_MAX_DIM or n > GRID_EXACT_MAX_N:
            raise ModeMismatchError(
                f"grid-exact needs d <= {GRID_EXACT_MAX_DIM} and N <= {GRID_EXACT_MAX_N}")
        return _grid_exact(values)
    if mode == 'sample-estimate':
        return _sample_estimate(values, samples, seed)
    raise ModeMismatchError(f"unknown discrepancy mode '{mode}'")
