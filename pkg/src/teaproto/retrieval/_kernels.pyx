# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled similarity kernels. Same contracts as ``_fallback``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def cosine_scores(const double[:, ::1] matrix, const double[::1] query):
    """Cosine of each row against ``query``; zero vectors score 0."""
    cdef Py_ssize_t n = matrix.shape[0], d = matrix.shape[1]
    cdef Py_ssize_t i, j
    cdef double dot, rn, qn = 0.0
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] res = out
    if query.shape[0] != d:
        raise ValueError("query dimension does not match matrix")
    for j in range(d):
        qn += query[j] * query[j]
    qn = sqrt(qn)
    if qn == 0.0:
        return out
    with nogil:
        for i in range(n):
            dot = 0.0
            rn = 0.0
            for j in range(d):
                dot += matrix[i, j] * query[j]
                rn += matrix[i, j] * matrix[i, j]
            if rn == 0.0:
                res[i] = 0.0
            else:
                res[i] = dot / (sqrt(rn) * qn)
                if res[i] > 1.0:
                    res[i] = 1.0
                elif res[i] < -1.0:
                    res[i] = -1.0
    return out


def top_k(const double[::1] scores, Py_ssize_t k):
    """Indices of the k best scores, descending; ties keep lower index first."""
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t i, j, pos, filled = 0
    if k > n:
        k = n
    if k <= 0:
        return np.zeros(0, dtype=np.intp)
    idx = np.empty(k, dtype=np.intp)
    cdef Py_ssize_t[::1] best = idx
    with nogil:
        for i in range(n):
            # insertion into the sorted prefix; strict > keeps earlier index on ties
            pos = filled
            while pos > 0 and scores[i] > scores[best[pos - 1]]:
                pos -= 1
            if pos >= k:
                continue
            j = filled if filled < k else k - 1
            while j > pos:
                best[j] = best[j - 1]
                j -= 1
            best[pos] = i
            if filled < k:
                filled += 1
    return idx


def accumulate_rows(const double[:, ::1] table, const Py_ssize_t[::1] rows, const double[::1] weights):
    """Weighted sum of selected table rows (the hashed-token projection)."""
    cdef Py_ssize_t d = table.shape[1], r, j
    out = np.zeros(d, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for r in range(rows.shape[0]):
            for j in range(d):
                res[j] += weights[r] * table[rows[r], j]
    return out
