"""Pure-numpy similarity kernels, used when the compiled extension is absent."""

from __future__ import annotations

import numpy as np


def dot_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Dot product of every row of ``matrix`` against ``query``, in float64."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    query = np.ascontiguousarray(query, dtype=np.float64)
    if matrix.shape[1] != query.shape[0]:
        raise ValueError("query dimension mismatch")
    return matrix @ query


def pairwise_dot(matrix: np.ndarray) -> np.ndarray:
    """Full n x n dot-product matrix of the rows of ``matrix``, in float64."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    return matrix @ matrix.T
