"""Numba dispatch.

Hot kernels are written once as plain Python loops over numpy arrays and
compiled with ``numba.njit`` unless ``FMADAPT_DISABLE_NUMBA`` is set to a
truthy value (or numba is not importable), in which case the vectorized
numpy fallbacks registered next to each kernel are used instead.
"""

import os

_FLAG = os.environ.get("FMADAPT_DISABLE_NUMBA", "").strip().lower()

try:  # pragma: no cover - import guard
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` with numba when enabled, otherwise return it untouched."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn
