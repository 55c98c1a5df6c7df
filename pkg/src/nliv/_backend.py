"""Kernel backend selection.

The hot loops (bootstrap direction resampling, penalized coordinate descent,
nearest-neighbor smoothing) ship in two interchangeable implementations: a
numba-jitted one and a pure-numpy one. Set NLIV_BACKEND=numpy to force the
fallback; the default is numba when it imports cleanly.
"""

import os
import warnings

_ENV_VAR = "NLIV_BACKEND"


def _resolve() -> str:
    choice = os.environ.get(_ENV_VAR, "numba").strip().lower()
    if choice not in ("numba", "numpy"):
        warnings.warn(
            f"{_ENV_VAR}={choice!r} not recognized, using 'numba'", stacklevel=2
        )
        choice = "numba"
    if choice == "numba":
        try:
            import numba  # noqa: F401
        except Exception:
            warnings.warn(
                "numba unavailable, falling back to the numpy kernels", stacklevel=2
            )
            choice = "numpy"
    return choice


BACKEND = _resolve()


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return BACKEND
