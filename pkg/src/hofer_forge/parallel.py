"""Thread-pool map capped by the HOFER_FORGE_THREADS environment variable."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_cap() -> int:
    raw = os.environ.get("HOFER_FORGE_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = os.cpu_count() or 1
    return max(1, cap)


def parallel_map(fn, items):
    """Ordered map; runs serially when the cap is 1 or there is one item."""
    items = list(items)
    workers = min(thread_cap(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
