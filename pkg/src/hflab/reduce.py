"""Deterministic partitioned reductions.

Work is split into partitions whose boundaries depend only on the problem
size, never on the worker count. Partial sums are combined in partition
order with ``math.fsum`` so the result is bit-identical for any number of
workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def default_workers() -> int:
    env = os.environ.get("HFLAB_WORKERS")
    return max(1, int(env)) if env else 1


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int | None = None) -> list[R]:
    """``[fn(x) for x in items]``, optionally evaluated on a thread pool.

    Output order always matches input order.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    items = list(items)
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def ordered_sum(partials: Iterable[float]) -> float:
    """Correctly rounded sum of partials taken in the given order."""
    return math.fsum(partials)


def partitions(n: int, size: int) -> list[tuple[int, int]]:
    """Fixed ``[start, stop)`` blocks of at most ``size`` covering ``range(n)``."""
    size = max(1, int(size))
    return [(s, min(s + size, n)) for s in range(0, n, size)]
