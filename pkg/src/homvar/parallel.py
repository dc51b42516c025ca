"""Ordered thread-pool map capped by ``HOMVAR_THREADS``."""

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    raw = os.environ.get("HOMVAR_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"HOMVAR_THREADS must be an integer, got {raw!r}") from None
        if value < 1:
            raise ValueError("HOMVAR_THREADS must be at least 1")
        return value
    return os.cpu_count() or 1


def ordered_map(fn, items):
    """``[fn(x) for x in items]``, possibly computed concurrently.

    Results come back in input order, so callers that reduce them serially
    get the same bits for any worker count.
    """
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
