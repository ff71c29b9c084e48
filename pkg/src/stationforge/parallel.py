"""Process-pool map whose results never depend on the worker count."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ENV_VAR = "STATIONFORGE_THREADS"


def worker_cap() -> int:
    raw = os.environ.get(ENV_VAR)
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}") from None


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """Ordered map; ``workers`` is further capped by ``STATIONFORGE_THREADS``."""
    items = list(items)
    n = min(worker_cap(), workers or worker_cap(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
