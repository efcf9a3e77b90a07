"""Kernel dispatch: compiled Cython routines when built, numpy fallbacks otherwise.

Set ``GAMMA_DDPC_PURE_PYTHON=1`` before import to force the fallback.
"""
import os

import numpy as np

from . import _fallback

if os.environ.get("GAMMA_DDPC_PURE_PYTHON") == "1":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def simulate(A, B, C, D, K, u, e, x0, impl=None):
    """Run the innovation-form recursion; returns ``(y, x)`` with ``x`` of length ``L + 1``."""
    mod = impl or _impl
    return mod.simulate(_c(A), _c(B), _c(C), _c(D), _c(K), _c(u), _c(e), _c(x0))


def kalman_filter(A, B, C, D, K, u, y, x0, impl=None):
    mod = impl or _impl
    return mod.kalman_filter(_c(A), _c(B), _c(C), _c(D), _c(K), _c(u), _c(y), _c(x0))


def hankel(w, t0, t1, N, impl=None):
    mod = impl or _impl
    return mod.hankel(_c(w), int(t0), int(t1), int(N))


def backends():
    """Available kernel modules keyed by name (used by the benchmark and tests)."""
    out = {"python": _fallback}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
