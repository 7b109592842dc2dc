"""JIT selection for the hot kernels.

Every kernel in the package exists twice: a loop version compiled with numba
and a vectorised numpy version. ``ANDHAM_DISABLE_NUMBA=1`` (or a missing numba
install) selects the numpy path at import time.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.getenv("ANDHAM_DISABLE_NUMBA", "0") not in ("1", "true", "True")

NUMBA_OPTS = {"cache": True, "nogil": True}


def njit(func):
    """Compile ``func`` with numba, or return it untouched when JIT is off."""
    if not HAS_NUMBA:
        return func
    return numba.njit(**NUMBA_OPTS)(func)


def select(jitted, fallback):
    """Pick the backend for one kernel according to the env flag."""
    return jitted if USE_NUMBA else fallback
