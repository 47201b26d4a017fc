"""JIT switch for the hot kernels.

Set ``MOTIONDB_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
The flag is read once at import time.
"""

import os

_FLAG = os.environ.get("MOTIONDB_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    if DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def njit(fn):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if HAVE_NUMBA:
        return _njit(cache=True)(fn)
    return fn


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
