"""Hot loops for the grid oracle.

The compiled extension is used when it was built; otherwise (or when
``STRATEGIC_SCREENING_PURE_PYTHON`` is set to a non-empty value) the numpy
fallback is selected at import.  Both return identical values.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_fallback

NORM_CODES = {"l1": 0, "l2": 1, "linf": 2, "quadratic": 3}

_impl = _kernels_fallback
BACKEND = "python"
if not os.environ.get("STRATEGIC_SCREENING_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def minplus_transition(v_prev, Y, Z, norm_code, A=None, backend=None):
    """Relax one stage of a grid shortest path.

    Returns ``(v, arg)`` with ``v[j] = min_i v_prev[i] + c(Y[i], Z[j])`` and
    ``arg[j]`` the minimizing row of ``Y`` (``-1`` if ``Y`` is empty).
    """
    if backend is None:
        impl = _impl
    elif backend == "python":
        impl = _kernels_fallback
    elif backend == "cython" and BACKEND == "cython":
        impl = _impl
    else:
        raise RuntimeError(f"kernel backend {backend!r} is not available")
    v_prev = np.ascontiguousarray(v_prev, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    Z = np.ascontiguousarray(Z, dtype=float)
    A = np.ascontiguousarray(np.zeros((1, 1)) if A is None else A, dtype=float)
    if Y.shape[0] == 0:
        return np.full(Z.shape[0], np.inf), np.full(Z.shape[0], -1, dtype=np.intp)
    order = np.argsort(v_prev, kind="stable")
    out, arg = impl.minplus_transition(v_prev[order], Y[order], Z, int(norm_code), A)
    arg = np.asarray(arg)
    arg = np.where(arg >= 0, order[np.maximum(arg, 0)], -1)
    return np.asarray(out), arg
