"""
MIMO-PA Navigator: Runtime Engine
Seed derivation from one root seed and the ordered worker pool.

Every random stream is keyed by (root seed, component names...). Names are
hashed with CRC-32 into the SeedSequence spawn key, integers are used as-is,
so the stream for ("dataset", ue 17, "symbols") never depends on how many
other streams were drawn before it or on which worker draws it.
"""
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from engines.errors import InvalidParameterError

log = logging.getLogger(__name__)


def _spawn_key(names):
    key = []
    for name in names:
        if isinstance(name, (bool, np.bool_)):
            raise InvalidParameterError(f"seed component must be str or int, got bool {name!r}")
        if isinstance(name, (int, np.integer)):
            if name < 0:
                raise InvalidParameterError(f"seed component must be non-negative, got {name}")
            key.append(int(name))
        elif isinstance(name, str):
            key.append(zlib.crc32(name.encode('utf-8')))
        else:
            raise InvalidParameterError(f"seed component must be str or int, got {type(name).__name__}")
    return tuple(key)


def seed_sequence(root, *names):
    if root is None or int(root) < 0:
        raise InvalidParameterError(f"root seed must be a non-negative integer, got {root!r}")
    return np.random.SeedSequence(entropy=int(root), spawn_key=_spawn_key(names))


def derive_seed(root, *names):
    """64-bit integer seed for the named component."""
    return int(seed_sequence(root, *names).generate_state(1, dtype=np.uint64)[0])


def rng_for(root, *names):
    return np.random.default_rng(seed_sequence(root, *names))


def as_rng(seed):
    """Accept a Generator, a SeedSequence or an integer seed."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def parallel_map(fn, items, threads=1, chunksize=1):
    """Map fn over items, results in input order whatever the worker count.

    threads <= 1 runs inline, which keeps tracebacks readable and avoids
    pickling; fn must be a module-level callable when threads > 1.
    """
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    workers = min(int(threads), len(items))
    log.info(f"[POOL] {len(items)} tasks on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
