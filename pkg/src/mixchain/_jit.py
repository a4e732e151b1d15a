"""Switch between numba-compiled kernels and the plain-Python/numpy path.

Set ``MIXCHAIN_DISABLE_JIT=1`` to run every kernel uncompiled. The kernels are
written so that both paths execute the same arithmetic in the same order, so
traces are bitwise identical either way (only much slower without numba).
"""
import os

DISABLE_JIT = os.environ.get("MIXCHAIN_DISABLE_JIT", "0").strip().lower() not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USING_NUMBA = numba is not None and not DISABLE_JIT


def njit(*args, **kwargs):
    """``numba.njit(cache=True, nogil=True)`` or a no-op decorator."""
    if USING_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
