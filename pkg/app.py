"""
Command line of the SQMC toolkit.

    python app.py discrepancy --n 256 --dim 2 --scheme none --mode grid-exact
    python app.py points --n 16 --dim 3 --scheme owen --seed 7 --out points.csv
    python app.py simulate --model toy --t 100 --seed 1 --out data/toy.csv
    python app.py filter --model toy --observations data/toy.csv --engine sqmc --n 1024 --moments x0,x0^2
    python app.py loglik --model msv --t 399 --engine smc --n 1024
    python app.py smooth --mode backward --model lgss --t 20 --n 512 --paths 512
    python app.py pmmh --model-family sv2 --t 399 --engine sqmc --n 32 --iters 10000 --out chain.csv
    python app.py bench --spec specs/toy_logz.txt --out-dir results/toy --workers 4

Data goes to stdout or --out files; status lines go to stderr.
"""
import argparse
import re
import sys
from pathlib import Path

import numpy as np
import pandas as pd

import config
from src.components.bench import ExperimentSpec, run_experiment
from src.components.feynman_kac import EngineConfig, log_evidence, run_filter
from src.components.lowdisc import DISCREPANCY_MODES, RandomizationScheme, sobol_points, star_discrepancy
from src.components.pmmh import PMMH_ENGINES, acceptance_rate, mcmc_ess, pmmh_run
from src.components.smoothing import backward_smoothing, forward_smoothing_additive, forward_smoothing_path
from src.components.visualization import REPORT_FORMATS, BenchReport, emit_report
from src.models import MODELS, get_model_entry, load_params
from src.models.families import FAMILIES, get_family, simulate_family
from src.utils.cache_manager import ReferenceCache
from src.utils.data_loader import as_vector, load_matrix, load_observations, save_observations
from src.utils.database import ResultStore
from src.utils.errors import SQMCError
from src.utils.logger import get_logger, set_level

logger = get_logger(__name__)

MOMENT_PATTERN = re.compile(r'^x(\d+)(?:\^(\d+))?$')


def status(message: str, ok: bool = True):
    print(f"{'✅' if ok else '❌'} {message}", file=sys.stderr)


def write_frame(frame: pd.DataFrame, out):
    """CSV with round-trip float precision, to a file or stdout."""
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False, float_format='%r')
        status(f"{len(frame)} rows written to {out}")
    else:
        frame.to_csv(sys.stdout, index=False, float_format='%r')


def parse_moments(spec: str) -> dict:
    """'x0,x0^2,x3' -> {name: phi}; phi(x) = x[:, j] ** k."""
    moments = {}
    for item in (s.strip() for s in (spec or '').split(',')):
        if not item:
            continue
        match = MOMENT_PATTERN.match(item)
        if not match:
            raise SQMCError(f"bad moment '{item}' (expected x<j> or x<j>^<k>)")
        j, k = int(match.group(1)), int(match.group(2) or 1)
        moments[item] = lambda x, j=j, k=k: x[:, j] ** k
    return moments


def scheme_from(args) -> RandomizationScheme:
    return RandomizationScheme(args.scheme or config.DEFAULT_SCHEME, args.seed)


def engine_from(args) -> EngineConfig:
    hilbert_m = args.hilbert_m if args.hilbert_m in ('default', 'auto') else int(args.hilbert_m)
    return EngineConfig(args.engine, args.n, args.seed, scheme_from(args), hilbert_m, args.resampler)


def load_problem(args):
    """(model, T) from --model/--params and either --observations or a simulation."""
    entry = get_model_entry(args.model)
    params = load_params(args.model, args.params)
    if args.observations:
        y = load_observations(args.observations)
        T = y.shape[0] - 1 if args.t is None else args.t
        if T > y.shape[0] - 1:
            raise SQMCError(f"--t {T} exceeds the {y.shape[0]} observations in {args.observations}")
    else:
        if args.t is None:
            raise SQMCError("give --t or --observations")
        T = args.t
        _, y = entry.simulate(params, T, args.data_seed)
    return entry.build(params, y), T


# ======================== subcommands ========================

def cmd_discrepancy(args):
    points = sobol_points(args.n, args.dim, scheme_from(args))
    print(repr(star_discrepancy(points, args.mode, samples=args.samples, seed=args.seed)))


def cmd_points(args):
    write_frame(sobol_points(args.n, args.dim, scheme_from(args)).to_frame(), args.out)


def cmd_simulate(args):
    entry = get_model_entry(args.model)
    x, y = entry.simulate(load_params(args.model, args.params), args.t, args.seed)
    if args.out:
        save_observations(y, args.out, x if args.with_states else None)
        status(f"{args.model}: {y.shape[0]} observations written to {args.out}")
    else:
        frame = pd.DataFrame(np.asarray(y).reshape(y.shape[0], -1))
        frame.columns = [f"y{j}" for j in frame.columns]
        frame.insert(0, 't', np.arange(len(frame)))
        write_frame(frame, None)


def cmd_filter(args):
    model, T = load_problem(args)
    moments = parse_moments(args.moments)
    output = run_filter(model, T, engine_from(args), moments=moments or None, keep_history=False,
                        raise_on_collapse=False)
    frame = pd.DataFrame({'t': np.arange(T + 1), 'logZ': output.logZ, 'ess': output.ess})
    for name, values in output.moments.items():
        frame[name] = values[:, 0]
    frame['step_ns'] = output.step_ns
    write_frame(frame, args.out)
    if 'collapsed_at' in output.metadata:
        status(f"weights collapsed at t={output.metadata['collapsed_at']}", ok=False)
        return 1
    status(f"{args.engine} N={args.n} T={T}: logZ={output.logZ[-1]!r}")
    return 0


def cmd_loglik(args):
    model, T = load_problem(args)
    output = run_filter(model, T, engine_from(args), keep_history=False, raise_on_collapse=False)
    value = log_evidence(output)
    if args.out:
        write_frame(pd.DataFrame({'T': [T], 'logZ': [value]}), args.out)
    else:
        print(repr(value))
    return 0 if np.isfinite(value) else 1


def cmd_smooth(args):
    model, T = load_problem(args)
    moments = parse_moments(args.phi)
    engine = engine_from(args)
    frame = pd.DataFrame({'t': np.arange(T + 1)})
    if args.mode == 'backward':
        phis = list(moments.values())
        estimates, _ = backward_smoothing(model, T, engine, args.paths,
                                          phi=lambda x: np.column_stack([f(x) for f in phis]))
        for k, name in enumerate(moments):
            frame[name] = estimates[:, k]
    else:
        for name, phi in moments.items():
            if args.mode == 'additive':
                frame[f"sum_{name}"] = forward_smoothing_additive(model, phi, engine, T)
            else:
                frame[f"sum_{name}"] = forward_smoothing_path(
                    model, lambda paths, phi=phi: np.sum([phi(paths[:, s, :]) for s in range(paths.shape[1])], axis=0),
                    engine, T)
    write_frame(frame, args.out)


def cmd_pmmh(args):
    if args.observations:
        y = load_observations(args.observations)
    else:
        _, y = simulate_family(args.model_family, args.t, args.data_seed)
    family = get_family(args.model_family, y)
    sigma = load_matrix(args.sigma) if args.sigma else family.default_sigma
    theta0 = as_vector(args.theta0, 'theta0') if args.theta0 else family.default_theta
    sample = pmmh_run(family, theta0, sigma, args.iters, N=args.n, engine=args.engine, seed=args.seed,
                      scheme_kind=args.scheme)
    write_frame(sample.to_frame(), args.out)

    status(f"acceptance rate: {acceptance_rate(sample):.4f}")
    for j, name in enumerate(family.param_names):
        try:
            status(f"ESS {name}: {mcmc_ess(sample, j):.1f}")
        except SQMCError as e:
            status(f"ESS {name}: {e}", ok=False)


def cmd_bench(args):
    spec = ExperimentSpec.from_file(args.spec)
    store = ResultStore(args.db)
    try:
        table = run_experiment(spec, store, workers=args.workers, cache=ReferenceCache())
    finally:
        store.close()
    for path in emit_report(table, args.format, args.out_dir):
        status(f"written {path}")
    print(BenchReport(table).console_table())
    failed = int(table.rows['failed'].sum())
    if failed:
        status(f"{failed} replicate(s) failed", ok=False)
    return 0


# ======================== argument parsing ========================

def add_scheme_args(parser):
    parser.add_argument('--scheme', default=None, help="none | shift | owen | iid (default from config)")
    parser.add_argument('--seed', type=int, default=0)


def add_engine_args(parser, engines=('smc', 'sqmc'), default_n=1024):
    parser.add_argument('--engine', choices=engines, default='sqmc')
    parser.add_argument('--n', type=int, default=default_n, help="particles")
    add_scheme_args(parser)
    parser.add_argument('--resampler', choices=('multinomial', 'systematic'), default='systematic')
    parser.add_argument('--hilbert-m', default='default', help="default | auto | bits per axis")


def add_model_args(parser):
    parser.add_argument('--model', choices=sorted(MODELS), required=True)
    parser.add_argument('--params', help="key=value parameter file")
    parser.add_argument('--observations', help="observation CSV (t, y0, ...)")
    parser.add_argument('--t', type=int, default=None, help="horizon T")
    parser.add_argument('--data-seed', type=int, default=1, help="seed of the simulated observations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='sqmc', description=config.APP_TITLE)
    parser.add_argument('--verbose', action='store_true')
    parser.add_argument('--quiet', action='store_true')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('discrepancy', help="star discrepancy of a Sobol' point set")
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--dim', type=int, required=True)
    p.add_argument('--mode', choices=DISCREPANCY_MODES, default='exact-1d')
    p.add_argument('--samples', type=int, default=10_000, help="anchor boxes of sample-estimate")
    add_scheme_args(p)
    p.set_defaults(func=cmd_discrepancy)

    p = sub.add_parser('points', help="export a Sobol' point set as CSV")
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--dim', type=int, required=True)
    p.add_argument('--out')
    add_scheme_args(p)
    p.set_defaults(func=cmd_points)

    p = sub.add_parser('simulate', help="simulate observations from a bundled model")
    p.add_argument('--model', choices=sorted(MODELS), required=True)
    p.add_argument('--params')
    p.add_argument('--t', type=int, required=True)
    p.add_argument('--seed', type=int, default=1)
    p.add_argument('--out')
    p.add_argument('--with-states', action='store_true', help="also write the hidden states")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('filter', help="run SMC or SQMC and write per-t estimates")
    add_model_args(p)
    add_engine_args(p)
    p.add_argument('--moments', default='', help="e.g. x0,x0^2")
    p.add_argument('--out')
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser('loglik', help="log-likelihood estimate log Z_T")
    add_model_args(p)
    add_engine_args(p)
    p.add_argument('--out')
    p.set_defaults(func=cmd_loglik)

    p = sub.add_parser('smooth', help="forward (additive, path) or backward smoothing")
    p.add_argument('--mode', choices=('additive', 'backward', 'path'), default='additive')
    add_model_args(p)
    add_engine_args(p)
    p.add_argument('--paths', type=int, default=256, help="backward trajectories N_B")
    p.add_argument('--phi', default='x0')
    p.add_argument('--out')
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser('pmmh', help="particle marginal Metropolis-Hastings")
    p.add_argument('--model-family', choices=sorted(FAMILIES), required=True)
    p.add_argument('--observations')
    p.add_argument('--t', type=int, default=99, help="horizon of the simulated data")
    p.add_argument('--data-seed', type=int, default=1)
    p.add_argument('--engine', choices=PMMH_ENGINES, default='sqmc')
    p.add_argument('--n', type=int, default=32)
    p.add_argument('--iters', type=int, required=True)
    p.add_argument('--sigma', help="proposal covariance file")
    p.add_argument('--theta0', help="comma separated starting point")
    add_scheme_args(p)
    p.add_argument('--out')
    p.set_defaults(func=cmd_pmmh)

    p = sub.add_parser('bench', help="run an experiment spec and write the report")
    p.add_argument('--spec', required=True)
    p.add_argument('--out-dir', required=True)
    p.add_argument('--workers', type=int, default=config.BENCH_WORKERS)
    p.add_argument('--db', default=config.RESULTS_DB_PATH)
    p.add_argument('--format', choices=REPORT_FORMATS, default='all')
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_level('DEBUG')
    elif args.quiet:
        set_level('WARNING')
    try:
        return args.func(args) or 0
    except SQMCError as e:
        logger.debug("command failed", exc_info=True)
        status(f"{type(e).__name__}: {e}", ok=False)
        return 1
    except OSError as e:
        status(f"I/O error: {e}", ok=False)
        return 2


if __name__ == "__main__":
    sys.exit(main())
