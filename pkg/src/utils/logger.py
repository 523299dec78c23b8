import logging

import config

_ROOT = 'sqmc'


def get_logger(name: str) -> logging.Logger:
    """Returns a logger under the `sqmc` namespace, configuring the root handler once."""
    root = logging.getLogger(_ROOT)
    if not root.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        handler.setFormatter(formatter)
        root.addHandler(handler)
        root.setLevel(getattr(logging, str(config.LOG_LEVEL).upper(), logging.INFO))
        root.propagate = False

    short = name.rsplit('.', 1)[-1]
    return logging.getLogger(f"{_ROOT}.{short}")


def set_level(level: str):
    """Changes the level of every sqmc logger (used by the CLI --verbose flag)."""
    logging.getLogger(_ROOT).setLevel(getattr(logging, level.upper(), logging.INFO))
