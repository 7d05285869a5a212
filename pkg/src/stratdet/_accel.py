"""JIT switch for the hot kernels.

Set ``STRATDET_NO_NUMBA=1`` to run the pure-numpy code paths instead of the
numba-compiled ones. Numba missing from the environment has the same effect.
"""

import os

_DISABLED = os.environ.get("STRATDET_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if _njit is not None:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn
