"""Numba switch.

Set ``SQGFRONT_PURE_NUMPY=1`` before import to run every kernel through its
numpy fallback. Numba is also bypassed when it is not importable.
"""
import os

_DISABLED = os.environ.get("SQGFRONT_PURE_NUMPY", "").strip().lower() in ("1", "true", "yes")

# the workqueue layer ships with numba itself; avoids probing for TBB/OpenMP
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    if _DISABLED:
        raise ImportError
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag in CI
    numba = None
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


# fastmath stays off: it licenses reassociation and breaks bitwise reproducibility
JIT = dict(cache=True, nogil=True, fastmath=False)
PJIT = dict(JIT, parallel=True)


def backend():
    return "numba" if HAVE_NUMBA else "numpy"


def set_threads(n):
    """Set the numba thread count, clamped to what the runtime allows."""
    if not HAVE_NUMBA or n is None:
        return 1
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n
