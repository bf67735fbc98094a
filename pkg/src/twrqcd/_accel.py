"""Optional numba acceleration.

Hot kernels are written twice: a loop-level implementation compiled with
``numba.njit`` and a vectorised pure-numpy implementation.  Setting the
environment variable ``TWRQCD_DISABLE_NUMBA=1`` (or having numba missing)
selects the numpy path everywhere.
"""
import os

_DISABLED = os.environ.get("TWRQCD_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    import numba

    NUMBA_ENABLED = True
except ImportError:
    numba = None
    NUMBA_ENABLED = False


def njit(func):
    """Compile ``func`` in nopython mode when numba is active, else return it unchanged."""
    if not NUMBA_ENABLED:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def select(fast, fallback):
    """Pick the numba kernel or the numpy fallback according to the active backend."""
    return fast if NUMBA_ENABLED else fallback


def backend():
    return "numba" if NUMBA_ENABLED else "numpy"
