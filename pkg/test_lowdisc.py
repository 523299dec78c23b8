"""Sobol' point sets, their randomizations and star discrepancy."""
import itertools

import numpy as np
import pandas as pd
import pytest

from src.components.lowdisc import (PointSet, RandomizationScheme, sobol_points, star_discrepancy,
                                    uniform_points)
from src.utils.errors import (DimensionExceedsTableError, ModeMismatchError, SQMCError,
                              ZeroCountError)


def _digits(values, m):
    """First m binary digits of each value, as integers."""
    return np.floor(np.asarray(values) * 2 ** m).astype(np.int64)


def _bit_level_sobol_1d(n):
    """First coordinate of Sobol': direction numbers v_k = 2^-k, Gray-code recursion."""
    bits = 32
    x, out = 0, [0.0]
    for i in range(1, n):
        c = (~(i - 1) & i).bit_length()  # lowest zero bit of i-1, 1-based
        x ^= 1 << (bits - c)
        out.append(x / 2 ** bits)
    return np.array(out)


class TestRandomizationScheme:
    def test_aliases(self):
        assert RandomizationScheme('owen').kind == 'owen-nested'
        assert RandomizationScheme('shift').kind == 'digital-shift'

    def test_unknown_kind(self):
        with pytest.raises(SQMCError):
            RandomizationScheme('halton')

    def test_none_ignores_step(self):
        scheme = RandomizationScheme('none', 3)
        assert scheme.for_step(1, 5) is scheme

    def test_steps_are_distinct(self):
        scheme = RandomizationScheme('owen', 3)
        assert scheme.for_step(1, 1).seed != scheme.for_step(1, 2).seed


class TestSobolPoints:
    def test_first_points_1d(self):
        np.testing.assert_array_equal(sobol_points(4, 1).values[:, 0], [0.0, 0.5, 0.75, 0.25])

    def test_first_point_is_origin(self):
        np.testing.assert_array_equal(sobol_points(1, 3).values, [[0.0, 0.0, 0.0]])

    def test_matches_bit_level_recursion(self):
        np.testing.assert_array_equal(sobol_points(16, 1).values[:, 0], _bit_level_sobol_1d(16))

    def test_nesting(self):
        small = sobol_points(32, 5).values
        large = sobol_points(64, 5).values
        np.testing.assert_array_equal(small, large[:32])

    @pytest.mark.parametrize('kind', ['none', 'digital-shift', 'owen-nested', 'iid'])
    def test_deterministic(self, kind):
        a = sobol_points(100, 4, RandomizationScheme(kind, 11)).values
        b = sobol_points(100, 4, RandomizationScheme(kind, 11)).values
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize('kind', ['digital-shift', 'owen-nested', 'iid'])
    def test_in_unit_cube(self, kind):
        values = sobol_points(1000, 6, RandomizationScheme(kind, 5)).values
        assert values.min() >= 0.0
        assert values.max() < 1.0

    def test_seeds_change_points(self):
        a = sobol_points(64, 2, RandomizationScheme('owen', 1)).values
        b = sobol_points(64, 2, RandomizationScheme('owen', 2)).values
        assert not np.array_equal(a, b)

    def test_zero_count(self):
        with pytest.raises(ZeroCountError):
            sobol_points(0, 2)

    def test_dimension_table(self):
        sobol_points(4, 32)
        with pytest.raises(DimensionExceedsTableError):
            sobol_points(4, 33)

    def test_owen_marginal_mean(self):
        values = sobol_points(2 ** 10, 2, RandomizationScheme('owen', 2024)).values
        tolerance = 3 * np.sqrt(1 / 12 / 2 ** 10)
        assert np.all(np.abs(values.mean(axis=0) - 0.5) < tolerance)

    @pytest.mark.parametrize('m', [1, 4, 7, 10])
    def test_owen_one_point_per_dyadic_interval(self, m):
        for seed in range(3):
            values = sobol_points(2 ** m, 1, RandomizationScheme('owen', seed)).values[:, 0]
            np.testing.assert_array_equal(np.sort(_digits(values, m)), np.arange(2 ** m))

    @pytest.mark.parametrize('m', [2, 5, 8])
    def test_digital_shift_keeps_digit_xor(self, m):
        base = _digits(sobol_points(64, 3).values, m)
        shifted = _digits(sobol_points(64, 3, RandomizationScheme('shift', 9)).values, m)
        np.testing.assert_array_equal(base[1:] ^ base[:-1], shifted[1:] ^ shifted[:-1])

    def test_owen_marginal_uniformity_over_seeds(self):
        # the same point index is uniform across scramblings
        draws = np.array([sobol_points(8, 1, RandomizationScheme('owen', s)).values[3, 0] for s in range(400)])
        counts = np.bincount(_digits(draws, 2), minlength=4)
        assert counts.min() > 60


class TestPointSet:
    def test_rejects_one(self):
        with pytest.raises(SQMCError):
            PointSet(np.array([[0.2], [1.0]]))

    def test_read_only_copy(self):
        raw = np.array([[0.1, 0.2]])
        ps = PointSet(raw)
        raw[0, 0] = 0.9
        assert ps.values[0, 0] == 0.1
        assert not ps.values.flags.writeable

    def test_csv_full_precision(self, tmp_path):
        ps = sobol_points(16, 3, RandomizationScheme('owen', 4))
        path = tmp_path / 'points.csv'
        ps.to_csv(path)
        np.testing.assert_array_equal(pd.read_csv(path).to_numpy(), ps.values)


class TestStarDiscrepancy:
    def test_single_midpoint(self):
        assert star_discrepancy(PointSet(np.array([[0.5]])), 'exact-1d') == 0.5

    @pytest.mark.parametrize('n', [1, 7, 32])
    def test_centered_grid(self, n):
        ps = PointSet((2 * np.arange(1, n + 1) - 1) / (2 * n))
        assert star_discrepancy(ps, 'exact-1d') == pytest.approx(1 / (2 * n), abs=1e-15)
        assert star_discrepancy(ps, 'grid-exact') == pytest.approx(1 / (2 * n), abs=1e-12)

    def test_exact_modes_agree_1d(self):
        for seed in range(5):
            ps = uniform_points(50, 1, seed)
            assert star_discrepancy(ps, 'exact-1d') == pytest.approx(star_discrepancy(ps, 'grid-exact'), abs=1e-12)

    @pytest.mark.parametrize('d', [2, 3])
    def test_grid_exact_matches_corner_enumeration(self, d):
        values = uniform_points(12, d, 11 + d).values
        grids = [np.append(np.unique(values[:, j]), 1.0) for j in range(d)]
        worst = 0.0
        for corner in itertools.product(*grids):
            corner = np.array(corner)
            volume = np.prod(corner)
            open_mass = np.mean(np.all(values < corner, axis=1))
            closed_mass = np.mean(np.all(values <= corner, axis=1))
            worst = max(worst, volume - open_mass, closed_mass - volume)
        assert star_discrepancy(PointSet(values), 'grid-exact') == pytest.approx(worst, abs=1e-12)

    @pytest.mark.slow
    def test_grid_exact_largest_allowed_size(self):
        ps = sobol_points(2 ** 10, 3)
        value = star_discrepancy(ps, 'grid-exact')
        assert star_discrepancy(ps, 'sample-estimate', samples=2000) <= value + 1e-12
        assert 1 / (2 * 2 ** 10) <= value < 0.03
        with pytest.raises(ModeMismatchError):
            star_discrepancy(sobol_points(2 ** 10 + 1, 3), 'grid-exact')

    def test_sample_estimate_is_lower_bound(self):
        ps = uniform_points(64, 2, 3)
        assert star_discrepancy(ps, 'sample-estimate', samples=2000) <= star_discrepancy(ps, 'grid-exact') + 1e-12

    def test_mode_mismatch(self):
        with pytest.raises(ModeMismatchError):
            star_discrepancy(sobol_points(8, 2), 'exact-1d')
        with pytest.raises(ModeMismatchError):
            star_discrepancy(sobol_points(8, 4), 'grid-exact')
        with pytest.raises(ModeMismatchError):
            star_discrepancy(sobol_points(8, 1), 'box-count')

    def test_sobol_beats_random(self):
        sobol = star_discrepancy(sobol_points(2 ** 6, 2), 'grid-exact')
        random = [star_discrepancy(uniform_points(2 ** 6, 2, s), 'grid-exact') for s in range(21)]
        assert sobol < np.median(random)

    @pytest.mark.slow
    def test_sobol_beats_random_full_size(self):
        sobol = star_discrepancy(sobol_points(2 ** 8, 2), 'grid-exact')
        random = [star_discrepancy(uniform_points(2 ** 8, 2, s), 'grid-exact') for s in range(100)]
        assert sobol < np.median(random)
