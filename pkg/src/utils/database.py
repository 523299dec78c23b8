import duckdb
import pandas as pd
from pathlib import Path

import config
from src.utils.logger import get_logger

logger = get_logger(__name__)

REPLICATE_COLUMNS = ['experiment', 'target', 'engine', 'n', 'replicate', 'seed',
                     'estimate', 'seconds', 'status', 'error']


class ResultStore:
    """duckdb store of bench replicates, one row per (experiment, target, engine, n, replicate)."""

    def __init__(self, db_path: str = None):
        """Opens (or creates) the result database; ':memory:' keeps it in RAM."""
        self.db_path = db_path or config.RESULTS_DB_PATH
        if self.db_path != ':memory:':
            Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self.connection = duckdb.connect(self.db_path)
        self._init_schema()

    def _init_schema(self):
        self.connection.execute("""
            CREATE TABLE IF NOT EXISTS replicates (
                experiment VARCHAR,
                target VARCHAR,
                engine VARCHAR,
                n BIGINT,
                replicate BIGINT,
                seed UBIGINT,
                estimate DOUBLE,
                seconds DOUBLE,
                status VARCHAR,
                error VARCHAR
            )
        """)

    def clear(self, experiment: str):
        """Drops the rows of one experiment (re-running a spec replaces its results)."""
        self.connection.execute("DELETE FROM replicates WHERE experiment = ?", [experiment])

    def save_replicates(self, rows) -> int:
        """Appends replicate rows (DataFrame or list of dicts); returns the row count."""
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows)
        if frame.empty:
            return 0
        frame = frame.reindex(columns=REPLICATE_COLUMNS)
        self.connection.register('incoming_replicates', frame)
        try:
            self.connection.execute(
                f"INSERT INTO replicates SELECT {', '.join(REPLICATE_COLUMNS)} FROM incoming_replicates")
        finally:
            self.connection.unregister('incoming_replicates')
        logger.debug("stored %d replicate rows", len(frame))
        return len(frame)

    def replicates(self, experiment: str) -> pd.DataFrame:
        return self.execute_query(
            "SELECT * FROM replicates WHERE experiment = ? ORDER BY target, engine, n, replicate", [experiment])

    def aggregate(self, experiment: str, target: str, reference: float = None) -> pd.DataFrame:
        """
        Per-cell statistics of the successful replicates.

        Columns: n, engine, replicates, failed, mean, variance (sample), mse
        (mean squared error against `reference`, NULL without one), seconds
        (mean wall clock).
        """
        query = """
            SELECT n, engine,
                   COUNT(*) FILTER (WHERE status = 'ok') AS replicates,
                   COUNT(*) FILTER (WHERE status <> 'ok') AS failed,
                   AVG(estimate) FILTER (WHERE status = 'ok') AS mean,
                   VAR_SAMP(estimate) FILTER (WHERE status = 'ok') AS variance,
                   AVG(POW(estimate - CAST(? AS DOUBLE), 2)) FILTER (WHERE status = 'ok') AS mse,
                   AVG(seconds) FILTER (WHERE status = 'ok') AS seconds
            FROM replicates
            WHERE experiment = ? AND target = ?
            GROUP BY n, engine
            ORDER BY n, engine
        """
        return self.execute_query(query, [reference, experiment, target])

    def execute_query(self, query: str, parameters=None) -> pd.DataFrame:
        """Runs a query and returns a DataFrame."""
        return self.connection.execute(query, parameters or []).fetchdf()

    def close(self):
        self.connection.close()
