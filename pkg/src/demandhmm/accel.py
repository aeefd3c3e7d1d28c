"""Optional numba acceleration for the sequential kernels.

The day-by-day filter, smoother and simulator dominate runtime during MCMC
and posterior post-processing. Each kernel is written as plain loop-based
numpy code; when numba is importable and the environment variable
``DEMANDHMM_NUMBA`` is unset or not ``0``, the kernels are compiled with
``@njit``, otherwise the interpreted implementations run as-is.

``python -m demandhmm.benchmark`` times both paths side by side.
"""

from __future__ import annotations

import os

_env = os.environ.get("DEMANDHMM_NUMBA", "1").strip().lower()
_requested = _env not in ("0", "false", "no", "off")

if _requested:
    try:
        from numba import njit as _njit

        NUMBA_AVAILABLE = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_AVAILABLE = False
else:
    try:
        import numba  # noqa: F401

        NUMBA_AVAILABLE = True
    except ImportError:  # pragma: no cover
        NUMBA_AVAILABLE = False

USE_NUMBA = _requested and NUMBA_AVAILABLE


def maybe_njit(fn):
    """Compile with numba when enabled, otherwise return the function unchanged."""
    if USE_NUMBA:
        return _njit(cache=True)(fn)
    return fn
