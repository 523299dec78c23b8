"""
Experiment harness: replicate filter runs per (engine, N), store them, and
turn them into mean / variance / MSE / gain tables.

A spec file is flat key=value text:

    name=toy-logz
    model=toy                    # any registered model; its params use the model namespace (toy.a=20)
    params=params/toy.txt        # optional extra parameter file
    T=100
    data_seed=1                  # observations are simulated with this seed ...
    observations=data/y.csv      # ... unless a file is given
    target=logZ                  # logZ | partial_logZ:<t> | moment:<coord>:<t>
    engines=smc,sqmc             # engine[:variant], variant = resampler (smc) or scheme (sqmc)
    n_grid=2^6,2^8,2^10
    replicates=100
    seed_base=0
    reference=high-N-run         # kalman | high-N-run | none
"""
import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import config
from src.components.feynman_kac import EngineConfig, log_evidence, run_filter
from src.components.lowdisc import RandomizationScheme
from src.models import get_model_entry, kalman_suite
from src.utils import rng as rng_streams
from src.utils.cache_manager import ReferenceCache
from src.utils.data_loader import (as_int, load_key_value_file, load_observations, namespace,
                                   parse_key_values)
from src.utils.database import ResultStore
from src.utils.errors import SpecFileError, SQMCError
from src.utils.logger import get_logger

logger = get_logger(__name__)

REFERENCE_SOURCES = ('kalman', 'high-N-run', 'none')
TABLE_COLUMNS = ['n', 'engine', 'replicates', 'failed', 'mean', 'variance', 'mse', 'seconds']
# errors that fail one cell without stopping the experiment
CELL_ERRORS = (SQMCError, ArithmeticError, np.linalg.LinAlgError)


def _grid_value(text: str, key: str) -> int:
    text = text.strip()
    if '^' in text:
        base, exponent = text.split('^', 1)
        return as_int(base, key) ** as_int(exponent, key)
    return as_int(text, key)


@dataclass(frozen=True)
class Target:
    """What one replicate estimates."""
    kind: str
    t: Optional[int] = None
    coordinate: int = 0

    @classmethod
    def parse(cls, text: str, T: int) -> 'Target':
        parts = text.strip().split(':')
        if parts[0] == 'logZ' and len(parts) == 1:
            return cls('logZ', T)
        if parts[0] == 'partial_logZ' and len(parts) == 2:
            return cls('partial_logZ', as_int(parts[1], 'target'))
        if parts[0] == 'moment' and len(parts) == 3:
            return cls('moment', as_int(parts[2], 'target'), as_int(parts[1], 'target'))
        raise SpecFileError(f"unknown target '{text}' (logZ, partial_logZ:<t> or moment:<coord>:<t>)")

    @property
    def label(self) -> str:
        if self.kind == 'moment':
            return f"moment:{self.coordinate}:{self.t}"
        if self.kind == 'partial_logZ':
            return f"partial_logZ:{self.t}"
        return 'logZ'

    def moments(self):
        if self.kind != 'moment':
            return None
        coordinate = self.coordinate
        return {'target': lambda x: x[:, coordinate]}

    def read(self, output) -> float:
        if self.kind == 'moment':
            return float(output.moments['target'][self.t, 0])
        return log_evidence(output, self.t)


@dataclass(frozen=True)
class EngineChoice:
    label: str
    engine: str
    variant: Optional[str] = None

    @classmethod
    def parse(cls, text: str, label: str) -> 'EngineChoice':
        engine, _, variant = text.strip().partition(':')
        if engine not in ('smc', 'sqmc'):
            raise SpecFileError(f"unknown engine '{text}'")
        return cls(label, engine, variant or None)

    def config(self, N: int, seed: int, spec: 'ExperimentSpec') -> EngineConfig:
        if self.engine == 'smc':
            return EngineConfig('smc', N, seed, resampler=self.variant or spec.resampler)
        scheme = RandomizationScheme(self.variant or spec.scheme, seed)
        return EngineConfig('sqmc', N, seed, scheme=scheme, hilbert_m=spec.hilbert_m)


@dataclass
class ExperimentSpec:
    name: str
    model: str
    T: int
    target: str = 'logZ'
    engines: Tuple[str, ...] = ('smc', 'sqmc')
    n_grid: Tuple[int, ...] = (2 ** 6, 2 ** 8, 2 ** 10)
    replicates: int = field(default_factory=lambda: config.DEFAULT_REPLICATES)
    seed_base: int = 0
    reference: str = 'high-N-run'
    data_seed: int = 1
    observations: Optional[str] = None
    scheme: str = field(default_factory=lambda: config.DEFAULT_SCHEME)
    resampler: str = 'systematic'
    hilbert_m: object = 'default'
    model_values: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.replicates < 2:
            raise SpecFileError("an experiment needs at least 2 replicates")
        if not self.n_grid:
            raise SpecFileError("n_grid must not be empty")
        if any(n < 1 for n in self.n_grid):
            raise SpecFileError("every grid N must be positive")
        if self.reference not in REFERENCE_SOURCES:
            raise SpecFileError(f"reference must be one of {', '.join(REFERENCE_SOURCES)}")
        if self.reference == 'kalman' and self.model != 'lgss':
            raise SpecFileError("a Kalman reference needs the lgss model")
        get_model_entry(self.model)
        self.parsed_target()

    @classmethod
    def from_mapping(cls, values: Dict[str, str]) -> 'ExperimentSpec':
        required = ('name', 'model', 'T')
        missing = [k for k in required if k not in values]
        if missing:
            raise SpecFileError(f"spec is missing {', '.join(missing)}")
        model = values['model']
        model_values = dict(load_key_value_file(values['params'])) if 'params' in values else {}
        model_values.update({k: v for k, v in values.items() if k.startswith(f"{model}.")})
        hilbert_m = values.get('hilbert_m', 'default')
        return cls(
            name=values['name'], model=model, T=as_int(values['T'], 'T'),
            target=values.get('target', 'logZ'),
            engines=tuple(e.strip() for e in values.get('engines', 'smc,sqmc').split(',') if e.strip()),
            n_grid=tuple(_grid_value(v, 'n_grid') for v in values.get('n_grid', '64').split(',') if v.strip()),
            replicates=as_int(values.get('replicates', str(config.DEFAULT_REPLICATES)), 'replicates'),
            seed_base=as_int(values.get('seed_base', '0'), 'seed_base'),
            reference=values.get('reference', 'high-N-run'),
            data_seed=as_int(values.get('data_seed', '1'), 'data_seed'),
            observations=values.get('observations'),
            scheme=values.get('scheme', config.DEFAULT_SCHEME),
            resampler=values.get('resampler', 'systematic'),
            hilbert_m=hilbert_m if hilbert_m in ('default', 'auto') else as_int(hilbert_m, 'hilbert_m'),
            model_values=model_values)

    @classmethod
    def from_file(cls, path) -> 'ExperimentSpec':
        return cls.from_mapping(load_key_value_file(path))

    @classmethod
    def from_text(cls, text: str) -> 'ExperimentSpec':
        return cls.from_mapping(parse_key_values(text, '<spec>'))

    def parsed_target(self) -> Target:
        return Target.parse(self.target, self.T)

    def engine_choices(self) -> List[EngineChoice]:
        seen: Dict[str, int] = {}
        choices = []
        for text in self.engines:
            seen[text] = seen.get(text, 0) + 1
            label = text if seen[text] == 1 else f"{text}#{seen[text]}"
            choices.append(EngineChoice.parse(text, label))
        return choices

    def fingerprint(self) -> str:
        """Stable description of everything the high-N reference depends on."""
        parts = [self.model, str(self.T), self.target, str(max(self.n_grid)), str(self.seed_base),
                 str(self.data_seed), str(self.observations), self.scheme, str(self.hilbert_m),
                 str(config.REFERENCE_RUNS), str(config.REFERENCE_N_FACTOR)]
        parts += [f"{k}={v}" for k, v in sorted(self.model_values.items())]
        if self.observations and Path(self.observations).exists():
            parts.append(hashlib.md5(Path(self.observations).read_bytes()).hexdigest())
        return '|'.join(parts)


@dataclass
class GainTable:
    """One row per (N, engine): replicates, failed, mean, variance, mse, seconds."""
    rows: pd.DataFrame
    reference: Optional[float] = None
    target: str = 'logZ'

    def __post_init__(self):
        self.rows = self.rows.reindex(columns=TABLE_COLUMNS).sort_values(['n', 'engine']).reset_index(drop=True)

    @property
    def engines(self) -> List[str]:
        return list(dict.fromkeys(self.rows['engine']))

    def _error_column(self) -> str:
        return 'mse' if self.rows['mse'].notna().any() else 'variance'

    def gains(self, baseline: str = 'smc', other: str = 'sqmc') -> pd.DataFrame:
        """
        MSE_baseline / MSE_other per N (variance ratio when there is no
        reference), plus the time-matched gain at the baseline's wall clock.
        """
        column = self._error_column()
        wide = self.rows.pivot(index='n', columns='engine', values=column)
        if baseline not in wide.columns or other not in wide.columns:
            raise SQMCError(f"gain needs both '{baseline}' and '{other}' in the table")
        seconds = self.rows.pivot(index='n', columns='engine', values='seconds')[baseline]
        frame = pd.DataFrame({'n': wide.index, 'gain': (wide[baseline] / wide[other]).to_numpy(),
                              'time_matched_gain': [self._gain_at(s, baseline, other) for s in seconds]})
        return frame.reset_index(drop=True)

    def _gain_at(self, seconds: float, baseline: str, other: str) -> float:
        if not np.isfinite(seconds) or seconds <= 0:
            return np.nan
        try:
            return self.time_matched_gain(seconds, baseline, other)
        except SQMCError:
            return np.nan

    def time_matched_gain(self, seconds: float, baseline: str = 'smc', other: str = 'sqmc') -> float:
        """
        Gain at equal wall clock: each engine's log error is interpolated
        linearly in log seconds, then the two are compared at `seconds`.
        """
        column = self._error_column()

        def log_error_at(engine):
            cells = self.rows[(self.rows['engine'] == engine) & (self.rows[column] > 0)
                              & (self.rows['seconds'] > 0)].sort_values('seconds')
            if cells.empty:
                raise SQMCError(f"no timed cells for engine '{engine}'")
            return np.interp(np.log(seconds), np.log(cells['seconds'].to_numpy(dtype=float)),
                             np.log(cells[column].to_numpy(dtype=float)))

        return float(np.exp(log_error_at(baseline) - log_error_at(other)))

    def to_csv(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.rows.to_csv(path, index=False, float_format='%r')

    @classmethod
    def from_csv(cls, path, reference: float = None, target: str = 'logZ') -> 'GainTable':
        return cls(pd.read_csv(path), reference, target)


# ======================== running ========================

def load_experiment_model(spec: ExperimentSpec):
    """(model, observations) for a spec; observations are simulated unless a file is given."""
    entry = get_model_entry(spec.model)
    params = entry.params_from(spec.model_values)
    if spec.observations:
        y = load_observations(spec.observations)
    else:
        _, y = entry.simulate(params, spec.T, spec.data_seed)
    return params, entry.build(params, y), y


def _replicate(model, T, target: Target, engine_config: EngineConfig) -> Tuple[float, float]:
    start = time.perf_counter()
    output = run_filter(model, T, engine_config, moments=target.moments(), keep_history=False)
    seconds = time.perf_counter() - start
    return target.read(output), seconds


def _run_cell(job):
    model, spec, target, choice, n, replicate = job
    seed = spec.seed_base + replicate
    row = {'experiment': spec.name, 'target': target.label, 'engine': choice.label, 'n': n,
           'replicate': replicate, 'seed': seed, 'estimate': np.nan, 'seconds': np.nan,
           'status': 'ok', 'error': None}
    try:
        row['estimate'], row['seconds'] = _replicate(model, spec.T, target, choice.config(n, seed, spec))
    except CELL_ERRORS as e:
        logger.warning("cell %s N=%d replicate %d failed: %s", choice.label, n, replicate, e)
        row['status'], row['error'] = 'failed', f"{type(e).__name__}: {e}"
    return row


def compute_reference(spec: ExperimentSpec, model, params, y, cache: ReferenceCache = None) -> Optional[float]:
    target = spec.parsed_target()
    if spec.reference == 'none':
        return None
    if spec.reference == 'kalman':
        result = kalman_suite(params, y)
        if target.kind == 'moment':
            return float(result.filter_means[target.t, target.coordinate])
        return float(result.loglik_path[target.t])

    def high_n_mean():
        n = max(spec.n_grid) * config.REFERENCE_N_FACTOR
        logger.info("computing high-N reference: %d SQMC runs at N=%d", config.REFERENCE_RUNS, n)
        values = []
        for i in range(config.REFERENCE_RUNS):
            seed = rng_streams.derive_seed(spec.seed_base, 0x5EF, i)
            engine = EngineConfig('sqmc', n, seed, scheme=RandomizationScheme(spec.scheme, seed),
                                  hilbert_m=spec.hilbert_m)
            values.append(_replicate(model, spec.T, target, engine)[0])
        return float(np.mean(values))

    cache = cache or ReferenceCache()
    return float(cache.get_or_compute(spec.fingerprint(), high_n_mean))


def run_experiment(spec: ExperimentSpec, store: ResultStore = None, workers: int = None,
                   cache: ReferenceCache = None) -> GainTable:
    """
    Runs every (engine, N, replicate) cell and aggregates them.

    Replicate r uses seed seed_base + r under every engine. Cells run on a
    thread pool of `workers`; failed cells are stored with status 'failed'
    and left out of the statistics.
    """
    store = store or ResultStore()
    workers = workers or config.BENCH_WORKERS
    target = spec.parsed_target()
    params, model, y = load_experiment_model(spec)
    if target.t is not None and not 0 <= target.t <= spec.T:
        raise SpecFileError(f"target time {target.t} is outside 0..{spec.T}")

    jobs = [(model, spec, target, choice, n, r)
            for choice in spec.engine_choices() for n in spec.n_grid for r in range(spec.replicates)]
    logger.info("experiment %s: %d cells on %d worker(s)", spec.name, len(jobs), workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(job) for job in jobs]

    frame = pd.DataFrame(rows)
    frame['seed'] = frame['seed'].astype(np.uint64)
    store.clear(spec.name)
    store.save_replicates(frame)
    failed = int((frame['status'] != 'ok').sum())
    if failed:
        logger.warning("experiment %s: %d failed cell(s)", spec.name, failed)

    reference = compute_reference(spec, model, params, y, cache)
    table = store.aggregate(spec.name, target.label, reference)
    return GainTable(table, reference, target.label)
