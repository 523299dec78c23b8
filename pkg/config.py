import os
from decouple import config as decouple_config, UndefinedValueError


def get_setting(key: str, default: any = None, cast=None):
    """
    Helper to read a setting.
    Looks first at the process environment (CI, Docker, shell exports) and then
    at the local .env file. Falls back to the default when neither has it.
    """
    env_value = os.getenv(key)
    if env_value is not None:
        return cast(env_value) if cast else env_value

    try:
        if cast:
            return decouple_config(key, default=default, cast=cast)
        return decouple_config(key, default=default)
    except UndefinedValueError:
        return default


# --- Logging ---
LOG_LEVEL = get_setting('LOG_LEVEL', default='INFO')

# --- Storage ---
RESULTS_DB_PATH = get_setting('RESULTS_DB_PATH', default='data/sqmc_results.duckdb')
CACHE_DIR = get_setting('CACHE_DIR', default='data/cache')
CACHE_MAX_AGE_HOURS = get_setting('CACHE_MAX_AGE_HOURS', default=168, cast=int)

# --- Engines ---
DEFAULT_SCHEME = get_setting('DEFAULT_SCHEME', default='owen')
SOBOL_MAX_DIM = get_setting('SOBOL_MAX_DIM', default=32, cast=int)

# --- Bench harness ---
DEFAULT_REPLICATES = get_setting('DEFAULT_REPLICATES', default=100, cast=int)
BENCH_WORKERS = get_setting('BENCH_WORKERS', default=1, cast=int)
REFERENCE_RUNS = get_setting('REFERENCE_RUNS', default=20, cast=int)
REFERENCE_N_FACTOR = get_setting('REFERENCE_N_FACTOR', default=8, cast=int)

APP_TITLE = "SQMC toolkit - sequential quasi-Monte Carlo filtering"
