"""Worker-count control and deterministic chunked fan-out."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

ENV_THREADS = "STORVAL_THREADS"


def worker_count() -> int:
    """Number of worker threads allowed by ``STORVAL_THREADS`` (0 or unset = auto)."""
    raw = os.environ.get(ENV_THREADS, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"{ENV_THREADS} must be >= 0, got {n}")
    if n == 0:
        n = os.cpu_count() or 1
    return n


def chunk_bounds(n: int, chunk: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def map_chunks(fn: Callable[[int, int], T], n: int, chunk: int = 4096) -> list[T]:
    """Apply ``fn(lo, hi)`` to fixed index chunks of ``range(n)``.

    Results come back in chunk order whatever the thread count, so any
    reduction over them is reproducible.
    """
    bounds = chunk_bounds(n, chunk)
    workers = min(worker_count(), len(bounds))
    if workers <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
