"""Hilbert indices, cell centers and the Hilbert sort."""
import numpy as np
import pytest

from src.components.hilbert import (HilbertIndex, default_resolution, hilbert_cell_center,
                                    hilbert_cell_centers, hilbert_index, hilbert_keys, hilbert_sort,
                                    resolve_resolution)
from src.utils import rng as rng_streams
from src.utils.errors import CoordinateOutOfRangeError, ResolutionOverflowError


def scalar_hilbert_index(point, m):
    """One point at a time on Python ints: rotate/reflect per level, Gray-encode, interleave."""
    d = len(point)
    X = [int(np.floor(c * 2 ** m)) for c in point]
    if d == 1:
        return X[0]
    top = 1 << (m - 1)
    Q = top
    while Q > 1:
        P = Q - 1
        for i in range(d):
            if X[i] & Q:
                X[0] ^= P
            else:
                t = (X[0] ^ X[i]) & P
                X[0] ^= t
                X[i] ^= t
        Q >>= 1
    for i in range(1, d):
        X[i] ^= X[i - 1]
    t, Q = 0, top
    while Q > 1:
        if X[d - 1] & Q:
            t ^= Q - 1
        Q >>= 1
    X = [x ^ t for x in X]
    k = 0
    for b in range(m - 1, -1, -1):
        for i in range(d):
            k = (k << 1) | ((X[i] >> b) & 1)
    return k


def _random_points(n, d, seed):
    return rng_streams.stream(seed, 0, rng_streams.POINTS).random((n, d))


def _as_ints(keys):
    if isinstance(keys, tuple):
        hi, lo = keys
        return [(int(h) << 64) | int(l) for h, l in zip(hi, lo)]
    return [int(k) for k in keys]


class TestHilbertIndex:
    def test_identity_curve_in_1d(self):
        assert hilbert_index([0.3], 3).bits == 2

    def test_center_in_1d(self):
        np.testing.assert_allclose(hilbert_cell_center(HilbertIndex(2, 1, 3)), [0.3125])

    def test_quadrant_path(self):
        centers = hilbert_cell_centers(np.arange(4), 2, 1)
        np.testing.assert_allclose(centers[0], [0.25, 0.25])
        steps = np.abs(np.diff(centers, axis=0))
        np.testing.assert_allclose(steps.sum(axis=1), 0.5)
        assert np.all(np.sum(steps > 0, axis=1) == 1)

    def test_order_two_curve_2d(self):
        # classic 4x4 Hilbert curve: starts at the origin, ends at (3, 0)
        cells = [(0, 0), (1, 0), (1, 1), (0, 1), (0, 2), (0, 3), (1, 3), (1, 2),
                 (2, 2), (2, 3), (3, 3), (3, 2), (3, 1), (2, 1), (2, 0), (3, 0)]
        centers = (np.array(cells) + 0.5) / 4
        np.testing.assert_array_equal(np.asarray(hilbert_keys(centers, 2), dtype=np.int64), np.arange(16))
        np.testing.assert_allclose(hilbert_cell_centers(np.arange(16), 2, 2), centers)

    def test_round_trip_2d(self):
        for k in range(64):
            center = hilbert_cell_center(HilbertIndex(k, 2, 3))
            assert hilbert_index(center, 3).bits == k

    def test_3d_centers_cover_grid(self):
        centers = hilbert_cell_centers(np.arange(64), 3, 2)
        cells = np.floor(centers * 4).astype(int)
        assert len({tuple(c) for c in cells}) == 64

    @pytest.mark.parametrize('d,m', [(2, 8), (3, 5), (5, 3), (3, 21), (4, 20)])
    def test_matches_scalar_oracle(self, d, m):
        points = _random_points(64, d, d * 100 + m)
        expected = [scalar_hilbert_index(p, m) for p in points]
        assert _as_ints(hilbert_keys(points, m)) == expected

    def test_wide_index_object(self):
        point = _random_points(1, 3, 8)[0]
        assert hilbert_index(point, 30).bits == scalar_hilbert_index(point, 30)

    def test_out_of_range(self):
        with pytest.raises(CoordinateOutOfRangeError):
            hilbert_index([0.2, 1.0], 4)
        with pytest.raises(CoordinateOutOfRangeError):
            hilbert_keys(np.array([[-0.1, 0.5]]), 4)

    def test_overflow(self):
        with pytest.raises(ResolutionOverflowError):
            hilbert_index([0.5, 0.5, 0.5], 50)
        with pytest.raises(ResolutionOverflowError):
            HilbertIndex(16, 2, 2)

    def test_default_resolution(self):
        assert default_resolution(1) == 64
        assert default_resolution(2) == 32
        assert default_resolution(3) == 21


class TestCurveProperties:
    @pytest.mark.parametrize('d,m', [(1, 16), (2, 8), (3, 6), (6, 3)])
    def test_bijective(self, d, m):
        k = np.arange(2 ** (d * m))
        centers = hilbert_cell_centers(k, d, m)
        np.testing.assert_array_equal(np.asarray(hilbert_keys(centers, m), dtype=np.int64), k)

    @pytest.mark.parametrize('d,m', [(1, 16), (2, 8), (3, 6), (6, 3)])
    def test_adjacent(self, d, m):
        centers = hilbert_cell_centers(np.arange(2 ** (d * m)), d, m)
        steps = np.abs(np.diff(centers, axis=0)) * 2 ** m
        assert np.all(np.sum(steps > 0.5, axis=1) == 1)
        np.testing.assert_allclose(steps.max(axis=1), 1.0)

    @pytest.mark.parametrize('d,m', [(1, 16), (2, 8), (3, 6), (4, 3)])
    def test_nested(self, d, m):
        children = hilbert_cell_centers(np.arange(2 ** (d * (m + 1))), d, m + 1)
        parents = np.asarray(hilbert_keys(children, m), dtype=np.int64)
        np.testing.assert_array_equal(parents, np.repeat(np.arange(2 ** (d * m)), 2 ** d))

    def test_locality(self):
        d, m = 2, 5
        n = 2 ** (d * m)
        centers = hilbert_cell_centers(np.arange(n), d, m)
        k, j = np.triu_indices(n, 1)
        distance = np.max(np.abs(centers[k] - centers[j]), axis=1)
        scale = ((j - k) / n) ** (1 / d)
        assert np.max(distance / scale) <= 4.0


class TestHilbertSort:
    def test_scalar_sort(self):
        np.testing.assert_array_equal(hilbert_sort(np.array([0.9, 0.1, 0.5])), [1, 2, 0])

    def test_single_point(self):
        np.testing.assert_array_equal(hilbert_sort(np.array([[0.3, 0.7]])), [0])

    def test_matches_oracle_order(self):
        points = _random_points(2 ** 6, 2, 42)
        expected = np.argsort([scalar_hilbert_index(p, 8) for p in points], kind='stable')
        np.testing.assert_array_equal(hilbert_sort(points, 8), expected)

    def test_wide_keys_order(self):
        points = _random_points(200, 3, 7)
        keys = [scalar_hilbert_index(p, 40) for p in points]
        expected = sorted(range(len(keys)), key=keys.__getitem__)
        np.testing.assert_array_equal(hilbert_sort(points, 40), expected)

    def test_ties_are_stable(self):
        points = np.array([[0.5, 0.5], [0.1, 0.1], [0.5, 0.5], [0.5, 0.5]])
        order = hilbert_sort(points, 4)
        ties = [i for i in order if i != 1]
        assert ties == [0, 2, 3]

    def test_is_permutation(self):
        points = _random_points(1000, 4, 3)
        np.testing.assert_array_equal(np.sort(hilbert_sort(points)), np.arange(1000))

    def test_auto_resolution_separates_points(self):
        points = _random_points(500, 2, 5)
        m = resolve_resolution(points, 'auto')
        assert m < default_resolution(2)
        assert len(set(_as_ints(hilbert_keys(points, m)))) == 500
