"""numba njit with a pure-python fallback.

Set ``DELAYLIN_DISABLE_NUMBA=1`` to run every kernel as plain python/numpy;
this is also the path taken when numba cannot be imported.
"""

import os

_DISABLED = os.environ.get("DELAYLIN_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _numba_njit

    NUMBA_ENABLED = True
except ImportError:
    _numba_njit = None
    NUMBA_ENABLED = False


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if NUMBA_ENABLED:
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrapper(f):
        return f

    return wrapper
