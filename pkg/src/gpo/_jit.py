"""JIT switch for the hot kernels.

Kernels are written once in a numba-compatible subset of numpy. With numba
available they are compiled with ``@njit``; setting ``GPO_DISABLE_NUMBA=1``
(or running without numba installed) leaves them as plain Python/numpy
functions. The flag is read once at import time.
"""
import os

_FLAG = os.environ.get("GPO_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("1", "true", "yes", "on")


def kernel(fn):
    """Compile ``fn`` with numba when enabled, else return it untouched."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def python_impl(fn):
    """Return the uncompiled Python function behind a kernel."""
    return getattr(fn, "py_func", fn)
