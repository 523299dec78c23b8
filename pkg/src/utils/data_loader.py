"""
Loaders for the flat text inputs of the toolkit.

Parameter and spec files are `key=value` lines (`#` starts a comment, blank
lines are skipped). Model parameters are namespaced (`toy.a=20`, `msv.d=2`);
vectors are comma separated and matrices use `;` between rows.
Observation files are CSVs with a `t` column followed by `y0, y1, ...`.
"""
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pandas as pd

from src.utils.errors import SpecFileError
from src.utils.logger import get_logger

logger = get_logger(__name__)


def parse_key_values(text: str, source: str = '<text>') -> Dict[str, str]:
    """
    Parses key=value text into a dict of raw strings.

    Args:
        text: file content
        source: name used in error messages

    Returns:
        dict: keys in file order; a repeated key keeps its last value
    """
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise SpecFileError(f"{source}:{number}: expected key=value, got '{raw.strip()}'")
        key, value = line.split('=', 1)
        key = key.strip()
        if not key:
            raise SpecFileError(f"{source}:{number}: empty key")
        values[key] = value.strip()
    return values


def load_key_value_file(path) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise SpecFileError(f"file not found: {path}")
    logger.debug("reading key=value file %s", path)
    return parse_key_values(path.read_text(encoding='utf-8'), str(path))


def namespace(values: Dict[str, str], prefix: str) -> Dict[str, str]:
    """Entries under `prefix.`, with the prefix stripped."""
    head = f"{prefix}."
    return {k[len(head):]: v for k, v in values.items() if k.startswith(head)}


# --- Value casting ---

def as_float(value: str, key: str = '') -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise SpecFileError(f"'{key}' must be a number, got '{value}'")


def as_int(value: str, key: str = '') -> int:
    try:
        return int(str(value).strip(), 0)
    except (TypeError, ValueError):
        raise SpecFileError(f"'{key}' must be an integer, got '{value}'")


def as_vector(value: str, key: str = '') -> np.ndarray:
    try:
        return np.array([float(v) for v in str(value).split(',') if v.strip()], dtype=np.float64)
    except ValueError:
        raise SpecFileError(f"'{key}' must be a comma separated list of numbers, got '{value}'")


def as_matrix(value: str, key: str = '') -> np.ndarray:
    rows = [as_vector(row, key) for row in str(value).split(';') if row.strip()]
    if not rows or len({r.size for r in rows}) != 1:
        raise SpecFileError(f"'{key}' must be a matrix written as rows separated by ';'")
    return np.vstack(rows)


def pick(values: Dict[str, str], key: str, cast, default=None):
    """values[key] cast, or the default when the key is absent."""
    if key not in values:
        return default
    return cast(values[key], key)


# --- Observation and matrix CSVs ---

def observations_frame(y: np.ndarray) -> pd.DataFrame:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    frame = pd.DataFrame(y, columns=[f"y{j}" for j in range(y.shape[1])])
    frame.insert(0, 't', np.arange(y.shape[0]))
    return frame


def save_observations(y: np.ndarray, path, states: Optional[np.ndarray] = None):
    """Writes t, y0, y1, ... (and x0, x1, ... when states are given)."""
    frame = observations_frame(y)
    if states is not None:
        states = np.asarray(states, dtype=np.float64).reshape(len(frame), -1)
        for j in range(states.shape[1]):
            frame[f"x{j}"] = states[:, j]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format='%r')


def load_observations(path) -> np.ndarray:
    """(T+1, d_y) array from an observation CSV, rows ordered by t."""
    path = Path(path)
    if not path.exists():
        raise SpecFileError(f"observation file not found: {path}")
    frame = pd.read_csv(path)
    columns = [c for c in frame.columns if c.startswith('y')]
    if not columns:
        raise SpecFileError(f"{path}: no y columns")
    if 't' in frame.columns:
        frame = frame.sort_values('t')
    return frame[columns].to_numpy(dtype=np.float64)


def load_matrix(path) -> np.ndarray:
    """Square matrix from a headerless CSV or a `;`-separated one-liner."""
    path = Path(path)
    if not path.exists():
        raise SpecFileError(f"matrix file not found: {path}")
    text = path.read_text(encoding='utf-8').strip()
    if ';' in text and '\n' not in text:
        return as_matrix(text, str(path))
    frame = pd.read_csv(path, header=None, comment='#')
    return frame.to_numpy(dtype=np.float64)
