import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import numpy as np

from equilearn.config import cpu_bound_threads, get_settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

SEED_MAX = 2 ** 64


def make_rng(seed: int, *spawn_key: int) -> np.random.Generator:
    """
    Build the generator for one node of the seed hierarchy.

    The run seed is the root; a spawn key such as (player, day) or
    (rollout,) names a child stream. Children of the same root never
    overlap, and a child's stream does not depend on how many siblings
    were drawn before it.
    """
    if not 0 <= seed < SEED_MAX:
        raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(spawn_key)))


# Lazily create a single worker pool sized by EQUILEARN_THREADS
_executor: Optional[ThreadPoolExecutor] = None


def get_executor() -> Optional[ThreadPoolExecutor]:
    global _executor
    workers = cpu_bound_threads(get_settings().threads)
    if workers <= 1:
        return None
    if _executor is None:
        _executor = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="equilearn")
        logger.info("Started worker pool with %d threads", workers)
    return _executor


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Map over items, in parallel when a pool is configured; results keep input order."""
    executor = get_executor()
    if executor is None:
        return [fn(item) for item in items]
    return list(executor.map(fn, items))


def shutdown_executor() -> None:
    global _executor
    if _executor is not None:
        _executor.shutdown(wait=True)
        _executor = None
