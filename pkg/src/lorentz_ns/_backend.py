"""Select between numba-compiled and pure-numpy kernels.

Set ``LORENTZ_NS_DISABLE_NUMBA=1`` to force the numpy path (also used when
numba is not importable).
"""

import logging
import os

logger = logging.getLogger(__name__)

_DISABLED = os.environ.get("LORENTZ_NS_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is available, identity otherwise."""
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


if _DISABLED:
    logger.info("numba kernels disabled by environment")
