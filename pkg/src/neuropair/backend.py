"""Kernel backend selection.

Hot inner loops (DTW recursion, LSTM time stepping) exist once as plain
Python/numpy functions in :mod:`neuropair.kernels`; when numba is available
they are JIT-compiled at import time. Set ``NEUROPAIR_BACKEND=numpy`` to
force the interpreted fallback (useful for debugging and for the
numba-vs-numpy benchmark), ``NEUROPAIR_BACKEND=numba`` to require the
compiled path.
"""

import os

ENV_VAR = "NEUROPAIR_BACKEND"

_CHOICES = ("auto", "numba", "numpy")


def _numba_importable() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def selected_backend() -> str:
    """Resolve the active backend name ("numba" or "numpy")."""
    choice = os.environ.get(ENV_VAR, "auto").strip().lower()
    if choice not in _CHOICES:
        raise ValueError(f"{ENV_VAR} must be one of {_CHOICES}, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not _numba_importable():
            raise ImportError(f"{ENV_VAR}=numba but numba is not installed")
        return "numba"
    return "numba" if _numba_importable() else "numpy"


def jit_compile(func):
    """Return an njit-compiled version of ``func``, or ``func`` unchanged."""
    if selected_backend() == "numba":
        from numba import njit

        return njit(cache=False)(func)
    return func
