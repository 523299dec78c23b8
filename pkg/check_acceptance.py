#!/usr/bin/env python3
"""
Full-scale acceptance checks for the SQMC toolkit.

Runs ten end-to-end statistical checks at full size (several minutes in
total) and exits non-zero if any fails. Pick checks by number:

    python check_acceptance.py          # all
    python check_acceptance.py 1 5 6    # a subset
"""
import sys
import tempfile
import time
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd

from src.components.bench import ExperimentSpec, run_experiment
from src.components.feynman_kac import EngineConfig, estimate_moment, log_evidence, run_filter
from src.components.hilbert import hilbert_cell_centers, hilbert_keys
from src.components.lowdisc import RandomizationScheme, sobol_points, star_discrepancy, uniform_points
from src.components.pmmh import acceptance_rate, pmmh_run
from src.components.resample import inverse_transform_labels
from src.components.smoothing import backward_smoothing
from src.models.families import get_family, simulate_family
from src.models.linear_gaussian import (LinearGaussianParams, build_linear_gaussian, kalman_suite,
                                        simulate_linear_gaussian)
from src.utils import rng as rng_streams
from src.utils.cache_manager import ReferenceCache
from src.utils.database import ResultStore


def _lgss(T: int, data_seed: int = 1):
    params = LinearGaussianParams.scalar(rho=0.9, sigma2=1.0, obs_var=1.0)
    _, y = simulate_linear_gaussian(params, T, data_seed)
    return params, y, build_linear_gaussian(params, y)


def _sqmc(N, seed):
    return EngineConfig('sqmc', N, seed, scheme=RandomizationScheme('owen-nested', seed))


def check_unbiased_evidence() -> bool:
    """exp(logZ_T^N) averages to the Kalman likelihood."""
    params, y, model = _lgss(10)
    exact = kalman_suite(params, y).loglik
    ratios = np.array([np.exp(log_evidence(run_filter(model, 10, _sqmc(2 ** 6, s), keep_history=False)) - exact)
                       for s in range(2000)])
    se = ratios.std(ddof=1) / np.sqrt(ratios.size)
    print(f"   mean Z/Z_kalman = {ratios.mean():.5f}, 3 SE = {3 * se:.5f}")
    return abs(ratios.mean() - 1.0) <= 3 * se


def check_rate_separation() -> bool:
    """Variance slopes of the filtering mean at T against log N."""
    T = 20
    _, _, model = _lgss(T)
    grid = [2 ** k for k in (6, 8, 10, 12, 14)]
    slopes = {}
    for engine in ('sqmc', 'smc'):
        variances = []
        for N in grid:
            estimates = []
            for r in range(100):
                cfg = _sqmc(N, r) if engine == 'sqmc' else EngineConfig('smc', N, r)
                output = run_filter(model, T, cfg, keep_history=False)
                estimates.append(estimate_moment(output, T, lambda x: x[:, 0])[0])
            variances.append(np.var(estimates, ddof=1))
        slopes[engine] = np.polyfit(np.log(grid), np.log(variances), 1)[0]
        print(f"   {engine}: log-variance slope {slopes[engine]:.3f}")
    return slopes['sqmc'] <= -1.05 and abs(slopes['smc'] + 1.0) <= 0.15


def _gain(spec_text: str, N: int):
    spec = ExperimentSpec.from_text(spec_text)
    with tempfile.TemporaryDirectory() as tmp:
        store = ResultStore(':memory:')
        table = run_experiment(spec, store, cache=ReferenceCache(tmp))
        store.close()
    print(table.rows.to_string(index=False))
    return float(table.gains().set_index('n').loc[N, 'gain'])


def check_toy_gain() -> bool:
    gain = _gain("name=toy\nmodel=toy\nT=100\ntarget=logZ\nengines=smc,sqmc\nn_grid=1024\n"
                 "replicates=100\nreference=high-N-run\n", 1024)
    print(f"   toy gain at N=2^10: {gain:.2f}")
    return gain >= 2.0


def check_sv_gain() -> bool:
    gain = _gain("name=sv2\nmodel=msv\nmsv.d=2\nT=399\ntarget=logZ\nengines=smc,sqmc\nn_grid=1024\n"
                 "replicates=100\nreference=high-N-run\n", 1024)
    print(f"   SV d=2 gain at N=2^10: {gain:.2f}")
    return gain > 1.0


def check_hilbert_properties() -> bool:
    violations = 0
    for d, m in ((1, 16), (2, 8), (3, 6)):
        k = np.arange(2 ** (d * m))
        centers = hilbert_cell_centers(k, d, m)
        violations += int(np.sum(hilbert_keys(centers, m).astype(np.int64) != k))
        steps = np.abs(np.diff(centers, axis=0)) * 2 ** m
        violations += int(np.sum(~((np.sum(steps > 0.5, axis=1) == 1) & np.isclose(steps.max(axis=1), 1.0))))
        children = hilbert_cell_centers(np.arange(2 ** (d * (m + 1))), d, m + 1)
        parents = hilbert_keys(children, m).astype(np.int64)
        violations += int(np.sum(parents != np.repeat(k, 2 ** d)))
        print(f"   d={d} m={m}: cumulative violations {violations}")
    return violations == 0


def check_resampling_oracle() -> bool:
    generator = rng_streams.stream(2024, 0, rng_streams.DISCREPANCY)
    mismatches = 0
    for _ in range(10_000):
        n = int(generator.integers(1, 40))
        W = generator.random(n) * (generator.random(n) < 0.8)
        if W.sum() == 0.0:
            W[0] = 1.0
        W = W / W.sum()
        u = np.sort(generator.random(int(generator.integers(1, 40))))
        cumulative = np.cumsum(W)
        expected = []
        for value in u:
            m = 0
            while m < n - 1 and cumulative[m] < value:
                m += 1
            expected.append(m)
        mismatches += int(np.any(inverse_transform_labels(u, W) != np.array(expected)))
    print(f"   mismatching instances: {mismatches}")
    return mismatches == 0


def check_backward_smoothing() -> bool:
    T = 20
    params, y, model = _lgss(T)
    rts = kalman_suite(params, y).smoother_means[:, 0]
    runs = np.array([backward_smoothing(model, T, _sqmc(2 ** 9, s), 2 ** 9)[0][:, 0] for s in range(100)])
    band = 3 * runs.std(axis=0, ddof=1) / np.sqrt(runs.shape[0])
    worst = np.max(np.abs(runs.mean(axis=0) - rts) / band)
    print(f"   worst |mean - RTS| in units of the 3-sigma band: {worst:.3f}")
    return bool(np.all(np.abs(runs.mean(axis=0) - rts) <= band))


def check_pmmh_ordering() -> bool:
    _, y = simulate_family('sv2', 99, 1)
    family = get_family('sv2', y)
    wins = 0
    for pair in range(5):
        rates = {}
        for engine in ('sqmc', 'smc'):
            sample = pmmh_run(family, family.default_theta, family.default_sigma, 10_000, N=32,
                              engine=engine, seed=pair)
            rates[engine] = acceptance_rate(sample)
        wins += rates['sqmc'] > rates['smc']
        print(f"   pair {pair}: sqmc {rates['sqmc']:.3f} vs smc {rates['smc']:.3f}")
    return wins >= 4


def check_discrepancy() -> bool:
    sobol = star_discrepancy(sobol_points(2 ** 8, 2, RandomizationScheme('none')), 'grid-exact')
    random = [star_discrepancy(uniform_points(2 ** 8, 2, s), 'grid-exact') for s in range(100)]
    print(f"   Sobol' D* = {sobol:.5f}, pseudo-random median = {np.median(random):.5f}")
    return sobol < np.median(random)


def check_determinism() -> bool:
    import app

    commands = [
        ['points', '--n', '64', '--dim', '3', '--scheme', 'owen', '--seed', '5'],
        ['simulate', '--model', 'toy', '--t', '30', '--seed', '3'],
        ['filter', '--model', 'toy', '--t', '30', '--engine', 'sqmc', '--n', '256', '--seed', '4',
         '--moments', 'x0,x0^2'],
        ['filter', '--model', 'msv', '--t', '30', '--engine', 'smc', '--n', '256', '--seed', '4'],
        ['smooth', '--mode', 'backward', '--model', 'lgss', '--t', '10', '--n', '128', '--paths', '64'],
        ['pmmh', '--model-family', 'lgss1', '--t', '30', '--engine', 'sqmc', '--n', '32', '--iters', '50'],
    ]
    ok = True
    with tempfile.TemporaryDirectory() as tmp:
        for i, command in enumerate(commands):
            frames = []
            for run in range(2):
                out = Path(tmp) / f"{i}_{run}.csv"
                app.main(['--quiet'] + command + ['--out', str(out)])
                frame = pd.read_csv(out, dtype=str)
                frames.append(frame.drop(columns=[c for c in ('step_ns', 'seconds') if c in frame.columns]))
            same = frames[0].equals(frames[1])
            ok &= same
            print(f"   {'✅' if same else '❌'} {' '.join(command[:3])}")
    return ok


CRITERIA = [
    ("Unbiased evidence", check_unbiased_evidence),
    ("Rate separation", check_rate_separation),
    ("Gain factor, toy model", check_toy_gain),
    ("Gain factor, SV d=2", check_sv_gain),
    ("Hilbert properties", check_hilbert_properties),
    ("Resampling oracle", check_resampling_oracle),
    ("Backward smoothing vs RTS", check_backward_smoothing),
    ("PMMH ordering", check_pmmh_ordering),
    ("Discrepancy sanity", check_discrepancy),
    ("Determinism", check_determinism),
]


def main(selected=None) -> bool:
    print("=" * 60)
    print(f"⏰ Started: {datetime.now()}")
    print("=" * 60)

    chosen = [(i, name, fn) for i, (name, fn) in enumerate(CRITERIA, start=1) if not selected or i in selected]
    passed = 0
    for i, name, fn in chosen:
        print(f"\n{i}. {name}")
        start = time.perf_counter()
        try:
            ok = fn()
        except Exception as e:
            print(f"   ❌ error: {type(e).__name__}: {e}")
            ok = False
        passed += ok
        print(f"{'✅' if ok else '❌'} {name}: {'PASSED' if ok else 'FAILED'} ({time.perf_counter() - start:.1f} s)")

    print("\n" + "=" * 60)
    if passed == len(chosen):
        print(f"🎉 ALL {passed} CRITERIA PASSED")
        return True
    print(f"❌ {len(chosen) - passed} of {len(chosen)} criteria failed")
    return False


if __name__ == "__main__":
    success = main({int(a) for a in sys.argv[1:]})
    sys.exit(0 if success else 1)
