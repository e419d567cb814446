"""Worker-count policy and an order-preserving parallel map.

Results are merged in input order regardless of the worker count, so
every computation in the package is deterministic for any --threads
setting.  Resolution order: explicit set_thread_count() (CLI flag),
then the DELAY_HINF_THREADS environment variable, then all cores.
"""

import os
from concurrent.futures import ThreadPoolExecutor

_override = None


def set_thread_count(n):
    global _override
    _override = None if n is None else max(1, int(n))


def thread_count():
    if _override is not None:
        return _override
    env = os.environ.get("DELAY_HINF_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def ordered_map(fn, items):
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
