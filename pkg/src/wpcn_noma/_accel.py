"""Numba switch for the hot kernels.

Set ``WPCN_NOMA_DISABLE_NUMBA=1`` before import to run every kernel through its
pure-numpy twin instead of the compiled loop version.
"""
import os

DISABLE_ENV = "WPCN_NOMA_DISABLE_NUMBA"


def _numba_requested():
    return os.environ.get(DISABLE_ENV, "0").strip().lower() not in ("1", "true", "yes")


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

USE_NUMBA = _numba is not None and _numba_requested()


def njit(fn):
    """Compile ``fn`` with numba when available; identity otherwise."""
    if _numba is None:
        return fn
    return _numba.njit(cache=True, fastmath=False)(fn)


def pick(compiled, fallback):
    """Return the kernel implementation selected by the env flag."""
    return compiled if USE_NUMBA else fallback
