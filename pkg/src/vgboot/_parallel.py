"""Order-preserving map over independent work units."""
from __future__ import annotations

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits


def _run_chunk(func, args, items):
    # single-threaded BLAS so results do not depend on the worker layout
    with threadpool_limits(limits=1):
        return [func(*args, item) for item in items]


def ordered_map(func, items, args=(), workers=1):
    """``[func(*args, item) for item in items]``, optionally across processes.

    Output order always follows ``items``; ``func`` must be a module-level
    function so it can be pickled.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return _run_chunk(func, args, items)
    n_chunks = min(len(items), 4 * workers)
    chunks = [c.tolist() for c in np.array_split(np.arange(len(items)), n_chunks)]
    out = Parallel(n_jobs=workers)(
        delayed(_run_chunk)(func, args, [items[i] for i in c]) for c in chunks if c
    )
    return [r for chunk in out for r in chunk]


def rng_for(seed: int, *index: int) -> np.random.Generator:
    """Independent stream keyed by ``(seed, *index)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *index]))
