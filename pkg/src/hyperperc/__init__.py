"""Percolation laboratory on Cayley graphs of free groups, free products and lattices."""

import os as _os

# probing the TBB layer prints a version warning on some systems
_os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
