"""Utility functions for the QAVC laboratory."""

import datetime
import functools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, TypeVar

import numpy as np

from qavc.settings import get_settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> int:
    """One step of the SplitMix64 finaliser (Steele, Lea and Flood, 2014)."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(root: int, *path: int) -> int:
    """Derive a 64-bit seed from a root seed and a path of indices.

    Stage seeds are derive_seed(root, stage_index), trial seeds
    derive_seed(stage_seed, trial_index). Any implementation of SplitMix64
    reproduces the same streams.

    Args:
        root: The root seed, reduced modulo 2**64.
        path: Stage/trial indices folded in one after another.

    Returns:
        A seed in [0, 2**64).
    """
    state = _splitmix64(root & _MASK64)
    for index in path:
        state = _splitmix64(state ^ (index & _MASK64))
    return state


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """A numpy Generator seeded by derive_seed(seed, *path)."""
    return np.random.default_rng(derive_seed(seed, *path))


def ordered_map(func: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Map func over items, possibly in a thread pool, keeping input order."""
    items = list(items)
    workers = get_settings().workers
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def timed(func: Callable) -> Callable:
    """Decorate a long-running computation so that its duration is logged."""

    @functools.wraps(func)
    def _timed(*args: Any, **kwargs: Any) -> Any:
        start = datetime.datetime.now()
        logger.debug("Function: %s", func.__name__)
        try:
            return func(*args, **kwargs)
        finally:
            logger.info(
                "%s took %s", func.__name__, datetime.datetime.now() - start
            )

    return _timed
