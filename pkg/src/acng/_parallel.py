import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def for_chunks(n: int, threads: int | None, fn, min_chunk: int = 16) -> None:
    """Call fn(lo, hi) over a partition of range(n), possibly on several threads.

    fn must write only to disjoint slots so the outcome does not depend on
    the thread count.
    """
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or n <= min_chunk:
        fn(0, n)
        return
    n_chunks = min(n // min_chunk, threads * 4)
    bounds = np.linspace(0, n, n_chunks + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda i: fn(int(bounds[i]), int(bounds[i + 1])), range(n_chunks)))
