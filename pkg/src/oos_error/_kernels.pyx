# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch kernels for the mean decision rule.

Each row of ``data`` is one dataset with source blocks laid out
contiguously in canonical order; ``sizes`` gives the block lengths.
``loss`` is 0 for squared error and 1 for absolute error.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline double _loss(double r, int loss) nogil:
    if loss == 0:
        return r * r
    return fabs(r)


def pairwise_loss_sums(const double[:, ::1] data, const long long[::1] sizes, int loss):
    """Return ``S[r, j, l] = sum_{i in S_j} L(Z_i, mean_l)`` for every row ``r``.

    The diagonal ``j == l`` is left at zero.
    """
    cdef Py_ssize_t rows = data.shape[0]
    cdef Py_ssize_t k = sizes.shape[0]
    cdef Py_ssize_t r, j, l, i, start
    cdef double acc, m
    out = np.zeros((rows, k, k), dtype=np.float64)
    cdef double[:, :, ::1] S = out
    cdef double *means = <double *> malloc(k * sizeof(double))
    cdef Py_ssize_t *offsets = <Py_ssize_t *> malloc((k + 1) * sizeof(Py_ssize_t))
    if means == NULL or offsets == NULL:
        free(means)
        free(offsets)
        raise MemoryError()
    offsets[0] = 0
    for j in range(k):
        offsets[j + 1] = offsets[j] + sizes[j]
    if offsets[k] != data.shape[1]:
        free(means)
        free(offsets)
        raise ValueError("sizes do not add up to the row length")
    try:
        with nogil:
            for r in range(rows):
                for j in range(k):
                    acc = 0.0
                    for i in range(offsets[j], offsets[j + 1]):
                        acc = acc + data[r, i]
                    means[j] = acc / sizes[j]
                for j in range(k):
                    for l in range(k):
                        if l == j:
                            continue
                        m = means[l]
                        acc = 0.0
                        for i in range(offsets[j], offsets[j + 1]):
                            acc = acc + _loss(data[r, i] - m, loss)
                        S[r, j, l] = acc
    finally:
        free(means)
        free(offsets)
    return out


def oos_rows(const double[:, ::1] data, const long long[::1] sizes, int loss):
    """Unbiased out-of-source estimate for every row of ``data``."""
    cdef Py_ssize_t rows = data.shape[0]
    cdef Py_ssize_t k = sizes.shape[0]
    cdef Py_ssize_t r, j, l
    cdef double n = 0.0, outer, inner
    for j in range(k):
        n += sizes[j]
    sums = pairwise_loss_sums(data, sizes, loss)
    cdef double[:, :, ::1] S = sums
    out = np.empty(rows, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for r in range(rows):
            outer = 0.0
            for j in range(k):
                inner = 0.0
                for l in range(k):
                    if l != j:
                        inner = inner + sizes[l] * S[r, j, l]
                outer = outer + inner / (n - sizes[j])
            res[r] = outer / n
    return out
