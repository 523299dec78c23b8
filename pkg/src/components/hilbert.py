"""
Hilbert curve in any dimension, at a finite resolution of m bits per axis.

Points of [0,1)^d are quantized to the 2^m grid, mapped to the "transposed"
Hilbert form (Butz's algorithm in Skilling's formulation: undo the excess
rotations, then Gray-encode) and the bits are interleaved into one index of
d*m bits. Everything is vectorised over the points; indices of up to 64 bits
are packed in uint64, wider ones (up to 128) in two uint64 limbs.
"""
from dataclasses import dataclass

import numpy as np

from src.utils.errors import CoordinateOutOfRangeError, ResolutionOverflowError

PACKED_BITS = 64
MAX_BITS = 128
_FLOAT_BITS = 53


@dataclass(frozen=True)
class HilbertIndex:
    """Position of a cell along the order-m curve in dimension d."""
    bits: int
    d: int
    m: int

    def __post_init__(self):
        _check_resolution(self.d, self.m)
        if not 0 <= int(self.bits) < 2 ** (self.d * self.m):
            raise ResolutionOverflowError(f"index {self.bits} does not fit in {self.d * self.m} bits")
        object.__setattr__(self, 'bits', int(self.bits))


def _check_resolution(d: int, m: int):
    if d < 1 or m < 1:
        raise ResolutionOverflowError(f"need d >= 1 and m >= 1 (got d={d}, m={m})")
    if d * m > MAX_BITS:
        raise ResolutionOverflowError(f"d*m = {d * m} exceeds {MAX_BITS} bits")
    if m > PACKED_BITS:
        raise ResolutionOverflowError(f"at most {PACKED_BITS} bits per axis (got m={m})")


def default_resolution(d: int) -> int:
    """m = floor(64/d): the finest resolution whose index fits in one word."""
    return max(1, PACKED_BITS // d)


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise CoordinateOutOfRangeError("expected a non-empty (N, d) array of points")
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x >= 1.0):
        raise CoordinateOutOfRangeError("Hilbert coordinates must lie in [0, 1)")
    return x


def _quantize(x: np.ndarray, m: int) -> np.ndarray:
    exact = min(m, _FLOAT_BITS)
    q = np.floor(x * 2.0 ** exact).astype(np.uint64)
    if m > exact:
        q = q << np.uint64(m - exact)
    return q


def _axes_to_transpose(q: np.ndarray, m: int) -> np.ndarray:
    X = q.copy()
    d = X.shape[1]
    Q = 1 << (m - 1)
    while Q > 1:
        bit = np.uint64(Q)
        low = np.uint64(Q - 1)
        for i in range(d):
            hit = (X[:, i] & bit) != 0
            t = np.where(hit, np.uint64(0), (X[:, 0] ^ X[:, i]) & low)
            X[:, 0] ^= np.where(hit, low, t)
            X[:, i] ^= t
        Q >>= 1
    # Gray encode
    for i in range(1, d):
        X[:, i] ^= X[:, i - 1]
    t = np.zeros(X.shape[0], dtype=np.uint64)
    Q = 1 << (m - 1)
    while Q > 1:
        t ^= np.where((X[:, d - 1] & np.uint64(Q)) != 0, np.uint64(Q - 1), np.uint64(0))
        Q >>= 1
    X ^= t[:, None]
    return X


def _transpose_to_axes(X: np.ndarray, m: int) -> np.ndarray:
    X = X.copy()
    d = X.shape[1]
    # Gray decode
    t = X[:, d - 1] >> np.uint64(1)
    for i in range(d - 1, 0, -1):
        X[:, i] ^= X[:, i - 1]
    X[:, 0] ^= t
    # Undo excess work
    Q = 2
    while Q != (1 << m):
        bit = np.uint64(Q)
        low = np.uint64(Q - 1)
        for i in range(d - 1, -1, -1):
            hit = (X[:, i] & bit) != 0
            t = np.where(hit, np.uint64(0), (X[:, 0] ^ X[:, i]) & low)
            X[:, 0] ^= np.where(hit, low, t)
            X[:, i] ^= t
        Q <<= 1
    return X


def _interleave(X: np.ndarray, m: int):
    """Index bits, most significant first: bit b of axis 0, of axis 1, ..."""
    n, d = X.shape
    total = d * m
    hi = np.zeros(n, dtype=np.uint64)
    lo = np.zeros(n, dtype=np.uint64)
    k = 0
    for b in range(m - 1, -1, -1):
        for i in range(d):
            bit = (X[:, i] >> np.uint64(b)) & np.uint64(1)
            if k < total - PACKED_BITS:
                hi = (hi << np.uint64(1)) | bit
            else:
                lo = (lo << np.uint64(1)) | bit
            k += 1
    return hi, lo


def _deinterleave(hi: np.ndarray, lo: np.ndarray, d: int, m: int) -> np.ndarray:
    total = d * m
    X = np.zeros((lo.shape[0], d), dtype=np.uint64)
    k = 0
    for b in range(m - 1, -1, -1):
        for i in range(d):
            position = total - 1 - k
            if position >= PACKED_BITS:
                bit = (hi >> np.uint64(position - PACKED_BITS)) & np.uint64(1)
            else:
                bit = (lo >> np.uint64(position)) & np.uint64(1)
            X[:, i] |= bit << np.uint64(b)
            k += 1
    return X


def hilbert_keys(points, m: int):
    """
    Hilbert indices of N points as sort keys.

    Returns a uint64 array when d*m <= 64, else a (hi, lo) pair of uint64
    arrays.
    """
    x = _as_points(points)
    d = x.shape[1]
    _check_resolution(d, m)
    q = _quantize(x, m)
    if d == 1:
        return q[:, 0]
    hi, lo = _interleave(_axes_to_transpose(q, m), m)
    if d * m <= PACKED_BITS:
        return lo
    return hi, lo


def hilbert_index(p, m: int) -> HilbertIndex:
    """Index of the order-m cell containing p (identity curve when d=1)."""
    x = _as_points(np.asarray(p, dtype=np.float64).reshape(1, -1))
    keys = hilbert_keys(x, m)
    if isinstance(keys, tuple):
        bits = (int(keys[0][0]) << PACKED_BITS) | int(keys[1][0])
    else:
        bits = int(keys[0])
    return HilbertIndex(bits, x.shape[1], m)


def hilbert_cell_centers(indices, d: int, m: int) -> np.ndarray:
    """Centers of the cells with the given indices (d*m <= 128)."""
    _check_resolution(d, m)
    values = [int(k) for k in np.atleast_1d(indices)]
    if any(k < 0 or k >= 2 ** (d * m) for k in values):
        raise ResolutionOverflowError("index out of range for this resolution")
    hi = np.array([k >> PACKED_BITS for k in values], dtype=np.uint64)
    lo = np.array([k & (2 ** PACKED_BITS - 1) for k in values], dtype=np.uint64)
    if d == 1:
        cells = lo[:, None]
    else:
        cells = _transpose_to_axes(_deinterleave(hi, lo, d, m), m)
    return (cells.astype(np.float64) + 0.5) / 2.0 ** m


def hilbert_cell_center(k: HilbertIndex) -> np.ndarray:
    """Center of the k-th cell along the order-m curve."""
    return hilbert_cell_centers([k.bits], k.d, k.m)[0]


def _distinct(keys) -> bool:
    if isinstance(keys, tuple):
        pairs = np.stack(keys, axis=1)
        return np.unique(pairs, axis=0).shape[0] == pairs.shape[0]
    return np.unique(keys).size == keys.size


def resolve_resolution(points, policy='default') -> int:
    """
    Turns a resolution policy into m.

    An integer is used as is; 'default' is floor(64/d); 'auto' raises m from
    the smallest useful value until all points get distinct indices or the
    64-bit cap is hit.
    """
    x = _as_points(points)
    n, d = x.shape
    cap = default_resolution(d)
    if policy == 'default' or policy is None:
        return cap
    if policy == 'auto':
        m = max(1, int(np.ceil(np.log2(max(n, 2)) / d)))
        while m < cap and not _distinct(hilbert_keys(x, m)):
            m += 1
        return min(m, cap)
    m = int(policy)
    _check_resolution(d, m)
    return m


def hilbert_sort(points, m='default') -> np.ndarray:
    """
    0-based permutation ordering the points by Hilbert index.

    Ties keep their original order (stable sort).
    """
    x = _as_points(points)
    resolution = resolve_resolution(x, m)
    keys = hilbert_keys(x, resolution)
    if isinstance(keys, tuple):
        hi, lo = keys
        return np.lexsort((lo, hi))
    return np.argsort(keys, kind='stable')
