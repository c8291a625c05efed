"""Similarity scan kernels with a compiled core and a numpy fallback.

The backend is selected once at import time. Set ILRKIT_NO_NATIVE=1 to
force the numpy fallback (useful for benchmarking and debugging).
"""

from __future__ import annotations

import os

import numpy as np

from . import fallback

BACKEND = "numpy"
_impl = fallback

if not os.environ.get("ILRKIT_NO_NATIVE"):
    try:
        from . import _native

        BACKEND = "native"
        _impl = _native
    except ImportError:
        pass


def _as_f64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def dot_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Dot product of each row of ``matrix`` (n, d) with ``query`` (d,)."""
    return _impl.dot_scores(_as_f64(matrix), _as_f64(query))


def pairwise_dot(matrix: np.ndarray) -> np.ndarray:
    """All-pairs row dot products of ``matrix`` (n, d) as an (n, n) matrix."""
    return _impl.pairwise_dot(_as_f64(matrix))
