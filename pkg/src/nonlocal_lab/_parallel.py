"""Optional thread-pool map controlled by ``NONLOCAL_LAB_WORKERS``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count(default: int = 1) -> int:
    raw = os.environ.get("NONLOCAL_LAB_WORKERS")
    if raw is None or raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"NONLOCAL_LAB_WORKERS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError("NONLOCAL_LAB_WORKERS must be at least 1")
    return n


def pmap(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """Order-preserving map; serial unless more than one worker is requested."""
    items = list(items)
    n = worker_count() if workers is None else workers
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
