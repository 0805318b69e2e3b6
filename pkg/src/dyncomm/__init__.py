"""Parallel dynamic Louvain community detection."""

import os

# the bundled TBB is too old for numba; OpenMP supports dynamic chunking
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
