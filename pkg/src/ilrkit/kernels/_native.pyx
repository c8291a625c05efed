# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled brute-force similarity kernels.

All accumulation is in 64-bit floats regardless of input precision.
"""

import numpy as np


def dot_scores(double[:, ::1] matrix, double[::1] query):
    """Dot product of every row of ``matrix`` against ``query``."""
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    if query.shape[0] != d:
        raise ValueError("query dimension mismatch")
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += matrix[i, j] * query[j]
        out[i] = acc
    return out_arr


def pairwise_dot(double[:, ::1] matrix):
    """Full n x n dot-product matrix of the rows of ``matrix``."""
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    out_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(i, n):
            acc = 0.0
            for k in range(d):
                acc += matrix[i, k] * matrix[j, k]
            out[i, j] = acc
            out[j, i] = acc
    return out_arr
