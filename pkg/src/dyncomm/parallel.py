"""Worker-count plumbing for the numba kernels."""

import os
from contextlib import contextmanager

import numba

#: chunk of vertices handed to a worker at a time under dynamic scheduling
CHUNK_SIZE = 2048

ENV_WORKERS = "DYNCOMM_WORKERS"


def max_workers() -> int:
    return int(numba.config.NUMBA_NUM_THREADS)


def resolve_workers(workers=None) -> int:
    """Explicit value, else $DYNCOMM_WORKERS, else 1."""
    if workers is None:
        env = os.environ.get(ENV_WORKERS)
        workers = int(env) if env else 1
    workers = int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers > max_workers():
        raise ValueError(
            f"{workers} workers requested but numba was started with {max_workers()} threads; "
            "set NUMBA_NUM_THREADS before importing dyncomm"
        )
    return workers


@contextmanager
def use_workers(workers):
    """Temporarily run parallel kernels on ``workers`` threads."""
    workers = resolve_workers(workers)
    prev = numba.get_num_threads()
    numba.set_num_threads(workers)
    prev_chunk = numba.set_parallel_chunksize(CHUNK_SIZE)
    try:
        yield workers
    finally:
        numba.set_parallel_chunksize(prev_chunk)
        numba.set_num_threads(prev)
