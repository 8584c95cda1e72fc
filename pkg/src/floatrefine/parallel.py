"""Ordered thread-pool mapping with a process-wide worker cap.

Work is always split into the same task list regardless of the cap, and
results are consumed in task order, so outputs never depend on how many
workers ran.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "FLOATREFINE_THREADS"
_cap: int | None = None


def set_threads(n: int | None) -> None:
    global _cap
    if n is not None and n < 1:
        raise ValueError("thread count must be >= 1")
    _cap = n


def get_threads() -> int:
    if _cap is not None:
        return _cap
    env = os.environ.get(ENV_VAR)
    if env:
        return max(1, int(env))
    return 1


def ordered_map(fn, tasks, threads: int | None = None) -> list:
    tasks = list(tasks)
    n = get_threads() if threads is None else threads
    if n <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=min(n, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
