"""Trial-level worker pool.

Work is split into contiguous index chunks; every chunk writes only its own
slice of preallocated outputs, so results do not depend on the number of
workers or on scheduling.
"""

import os
from concurrent.futures import ThreadPoolExecutor

from ._validation import check_int


def default_threads():
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity")
               else (os.cpu_count() or 1))


def resolve_threads(threads):
    if threads is None:
        return default_threads()
    return check_int(threads, "threads", 1)


def run_chunks(n_items, threads, fn, min_chunk=16):
    """Call ``fn(lo, hi)`` over a partition of ``range(n_items)``."""
    threads = resolve_threads(threads)
    if n_items <= 0:
        return
    n_chunks = max(1, min(threads * 4, n_items // min_chunk or 1))
    bounds = [n_items * i // n_chunks for i in range(n_chunks + 1)]
    pairs = [(lo, hi) for lo, hi in zip(bounds, bounds[1:]) if hi > lo]
    if threads == 1 or len(pairs) == 1:
        for lo, hi in pairs:
            fn(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for fut in [pool.submit(fn, lo, hi) for lo, hi in pairs]:
            fut.result()
