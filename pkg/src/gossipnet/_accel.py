"""JIT selection for the hot kernels.

Kernels are written once as plain Python over numpy arrays. When numba is
importable and ``GOSSIPNET_DISABLE_JIT`` is unset, they are compiled with
``numba.njit``; otherwise the plain functions run as the fallback path.
"""

import os

_FLAG = "GOSSIPNET_DISABLE_JIT"


def _jit_disabled():
    return os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


try:
    if _jit_disabled():
        raise ImportError("JIT disabled by environment")
    from numba import njit as _njit

    JIT_ENABLED = True
except ImportError:
    _njit = None
    JIT_ENABLED = False


def kernel(fn):
    """Compile ``fn`` with numba when enabled, else return it unchanged."""
    if JIT_ENABLED:
        return _njit(cache=True, nogil=True)(fn)
    return fn


def python_impl(fn):
    """Return the uncompiled body of a kernel (identity on the fallback path)."""
    return getattr(fn, "py_func", fn)
