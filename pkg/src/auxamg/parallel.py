"""Row-partitioned kernel scheduling.

Kernels split their rows into contiguous chunks and hand them to a thread
pool.  Each output row is written by exactly one chunk and no reduction
crosses chunk boundaries, so results do not depend on the worker count.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_threads = 1
_pool = None
# below this many rows the pool overhead dominates
MIN_ROWS_PER_CHUNK = 4096


def set_threads(n):
    global _threads, _pool
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if _pool is not None:
        _pool.shutdown(wait=True)
        _pool = None
    _threads = n
    if n > 1:
        _pool = ThreadPoolExecutor(max_workers=n)


def get_threads():
    return _threads


def row_chunks(n_rows, n_chunks=None):
    """Return ``[(lo, hi), ...]`` covering ``range(n_rows)`` in order."""
    if n_chunks is None:
        n_chunks = _threads
    n_chunks = max(1, min(n_chunks, n_rows // MIN_ROWS_PER_CHUNK or 1))
    edges = np.linspace(0, n_rows, n_chunks + 1).astype(np.int64)
    return [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:])]


def for_rows(kernel, n_rows):
    """Call ``kernel(lo, hi)`` on every chunk; blocks until all are done."""
    chunks = row_chunks(n_rows)
    if len(chunks) == 1 or _pool is None:
        for lo, hi in chunks:
            kernel(lo, hi)
        return
    futures = [_pool.submit(kernel, lo, hi) for lo, hi in chunks]
    for f in futures:
        f.result()


def dot(x, y):
    """Euclidean inner product with a fixed pairwise reduction tree."""
    return float(np.add.reduce(np.multiply(x, y)))


def norm(x):
    return dot(x, x) ** 0.5
