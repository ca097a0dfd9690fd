"""Numba toggle.

Hot kernels are written twice: an ``@njit`` loop version and a vectorised
numpy version. Which one runs is decided once, at import time:

    CALIB_LAB_DISABLE_NUMBA=1   force the pure-numpy path

If numba cannot be imported the numpy path is used silently.
"""

from __future__ import annotations

import os

_DISABLE = os.environ.get("CALIB_LAB_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

USE_NUMBA = _numba is not None and not _DISABLE


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True, nogil=True``; identity when numba is off."""
    if not USE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return _numba.njit(*args, **kwargs)


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
