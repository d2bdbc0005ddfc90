"""Numba switch.

Set ``MLMAUDIT_PURE_NUMPY=1`` to force the pure-numpy kernels, e.g. when
debugging or on platforms without an LLVM build of numba.
"""

import os

_TRUTHY = {"1", "true", "yes", "on"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("MLMAUDIT_PURE_NUMPY", "").lower() not in _TRUTHY
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is importable, else return it."""
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
