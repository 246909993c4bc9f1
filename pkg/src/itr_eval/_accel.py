"""Backend selection for the batched kernels.

Set ``ITR_EVAL_NUMBA=0`` to force the pure-numpy path. When numba is not
importable the numpy path is used regardless of the flag.
"""
from __future__ import annotations

import os

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # the default search tries TBB first and warns when it is too old
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "omp"
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator

    prange = range


_FALSY = {"0", "false", "no", "off", ""}


def numba_requested() -> bool:
    return os.environ.get("ITR_EVAL_NUMBA", "1").strip().lower() not in _FALSY


def default_backend() -> str:
    """Backend used when a kernel is called with ``backend=None``."""
    return "numba" if (HAVE_NUMBA and numba_requested()) else "numpy"


def resolve_backend(backend) -> str:
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}; expected 'numba' or 'numpy'")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
