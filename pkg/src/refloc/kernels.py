"""Backend selection for the numerical kernels.

The compiled extension is used when it imports; otherwise the numpy version is.
Setting ``REFLOC_PURE=1`` forces the numpy version.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("REFLOC_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"
_impl = _compiled if _compiled is not None else _kernels_py

_threads = 1


def set_threads(n: int) -> None:
    """Number of worker threads used to split large gate batches."""
    global _threads
    _threads = max(1, int(n))


def get_backend(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"numpy"``); default is the active one."""
    if name is None:
        return _impl
    if name == "numpy":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available in this build")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def norm_smooth(leg, V, mu, order=2, backend=None):
    return get_backend(backend).norm_smooth(leg, np.ascontiguousarray(V, dtype=float), float(mu), int(order))


def solve_gates(leg1, leg2, legh, U, y0, X, Q, T, mu, tol=1e-15, maxit=100, backend=None, sens=True):
    impl = get_backend(backend)
    X = np.ascontiguousarray(X, dtype=float)
    Q = np.ascontiguousarray(Q, dtype=float)
    T = np.ascontiguousarray(T, dtype=float)
    U = np.ascontiguousarray(U, dtype=float)
    y0 = np.ascontiguousarray(np.broadcast_to(np.asarray(y0, dtype=float), X.shape))
    n = X.shape[0]
    if _threads <= 1 or n < 256:
        return impl.solve_gates(leg1, leg2, legh, U, y0, X, Q, T, float(mu), float(tol), int(maxit), bool(sens))
    chunks = np.array_split(np.arange(n), _threads)
    with ThreadPoolExecutor(max_workers=_threads) as pool:
        parts = list(pool.map(
            lambda idx: impl.solve_gates(leg1, leg2, legh, U, y0[idx], X[idx], Q[idx], T[idx],
                                         float(mu), float(tol), int(maxit), bool(sens)), chunks))
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(6))
