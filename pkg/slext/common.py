import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from enum import Enum

import numpy as np
import tqdm

from .config import resolve
from .errors import SpecParseError

DEBUG_LOGGING_ENABLED = os.environ.get("SLEXT_DEBUG", "") not in ("", "0")

logger = logging.getLogger("slext")

# Angles are stored in (0, pi]; pi marks the Dirichlet-type condition.
PI = math.pi
HALF_PI = 0.5 * math.pi


def set_debug_logging(enabled):
    global DEBUG_LOGGING_ENABLED
    DEBUG_LOGGING_ENABLED = bool(enabled)
    if enabled:
        if not logger.handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter("[%(levelname)s] %(name)s: %(message)s"))
            logger.addHandler(handler)
        logger.setLevel(logging.DEBUG)


def log_debug(message):
    if DEBUG_LOGGING_ENABLED:
        logger.debug(message)


def arccot(value):
    """Inverse cotangent on the branch (0, pi)."""
    if value == 0.0:
        return HALF_PI
    if math.isinf(value):
        return 0.0 if value > 0 else PI
    result = math.atan(1.0 / value)
    return result if result > 0 else result + PI


def cot(angle):
    if angle == PI:
        return -math.inf
    return math.cos(angle) / math.sin(angle)


def is_pi(angle, tol=1e-12):
    return abs(angle - PI) <= tol


def check_angle(angle, name):
    """Raise SpecParseError unless angle lies in (0, pi]."""
    if not (0.0 < angle <= PI + 1e-15):
        raise SpecParseError(f"{name}={angle!r} outside (0, pi]")
    return min(angle, PI)


def as_matrix(R):
    M = np.asarray(R, dtype=float)
    if M.shape != (2, 2):
        raise SpecParseError(f"expected a 2x2 matrix, got shape {M.shape}")
    return M


def parallel_map(func, items, config=None, desc=None):
    """
    Map func over items on a thread pool, keeping input order.

    Args:
        func (callable): work item handler
        items (iterable): inputs
        config (NumericsConfig | None): supplies num_threads and show_progress
        desc (str | None): tqdm label

    Returns:
        list: results in the order of items
    """
    cfg = resolve(config)
    items = list(items)
    if cfg.num_threads <= 1 or len(items) < 2:
        iterator = tqdm.tqdm(items, desc=desc, disable=not cfg.show_progress, leave=False)
        return [func(item) for item in iterator]
    with ThreadPoolExecutor(max_workers=cfg.num_threads) as executor:
        results = executor.map(func, items)
        return list(tqdm.tqdm(results, total=len(items), desc=desc,
                              disable=not cfg.show_progress, leave=False))


class Side(str, Enum):
    LEFT = "Left"
    RIGHT = "Right"

    @property
    def other(self):
        return Side.RIGHT if self is Side.LEFT else Side.LEFT
