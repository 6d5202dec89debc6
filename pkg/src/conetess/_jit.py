"""Numba switch.

Set ``CONETESS_DISABLE_JIT=1`` to run every kernel as plain Python/numpy.
"""
import os

JIT_ENABLED = os.environ.get("CONETESS_DISABLE_JIT", "0").lower() not in ("1", "true", "yes")

if JIT_ENABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover
        JIT_ENABLED = False


def jit(func):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if not JIT_ENABLED:
        return func
    return numba.njit(cache=True)(func)
