import json
import hashlib
from pathlib import Path
from datetime import datetime, timedelta
from typing import Any, Optional

import config
from src.utils.logger import get_logger

logger = get_logger(__name__)


class ReferenceCache:
    """JSON cache of expensive reference values (high-N runs), keyed by an experiment fingerprint."""

    def __init__(self, cache_dir: str = None, max_age_hours: int = None):
        self.cache_dir = Path(cache_dir or config.CACHE_DIR)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.max_age_hours = config.CACHE_MAX_AGE_HOURS if max_age_hours is None else max_age_hours

    def _get_cache_key(self, key: str) -> str:
        """Cache filename from key"""
        return hashlib.md5(key.encode()).hexdigest()

    def _path(self, key: str) -> Path:
        return self.cache_dir / f"{self._get_cache_key(key)}.json"

    def get(self, key: str) -> Optional[Any]:
        """Cached value if it exists and has not expired"""
        cache_file = self._path(key)
        if not cache_file.exists():
            return None

        try:
            data = json.loads(cache_file.read_text())
        except (OSError, ValueError):
            logger.warning("unreadable cache entry %s, ignoring it", cache_file.name)
            return None

        cached_time = datetime.fromisoformat(data['timestamp'])
        if datetime.now() - cached_time > timedelta(hours=self.max_age_hours):
            cache_file.unlink()
            return None
        if data.get('key') != key:
            return None
        return data['value']

    def set(self, key: str, value: Any):
        data = {
            'timestamp': datetime.now().isoformat(),
            'key': key,
            'value': value
        }
        self._path(key).write_text(json.dumps(data))

    def get_or_compute(self, key: str, compute) -> Any:
        value = self.get(key)
        if value is None:
            value = compute()
            self.set(key, value)
        else:
            logger.info("reference value taken from cache")
        return value

    def clear(self):
        for cache_file in self.cache_dir.glob("*.json"):
            cache_file.unlink()
