# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled semi-global alignment kernel.

Same recurrence as the pure fallback in _dp_py: the query is consumed in
full, utterance flanks are gap-free, result is max over the last DP row.
"""

import numpy as np

cimport numpy as cnp


def semiglobal_score(object query, object utt,
                     double match, double mismatch, double gap):
    """Raw (unnormalised) optimal semi-global alignment score."""
    cdef cnp.int32_t[::1] q = np.ascontiguousarray(query, dtype=np.int32)
    cdef cnp.int32_t[::1] u = np.ascontiguousarray(utt, dtype=np.int32)
    cdef Py_ssize_t m = q.shape[0]
    cdef Py_ssize_t n = u.shape[0]
    if n == 0:
        return m * gap

    cdef cnp.float64_t[::1] prev = np.zeros(n + 1)
    cdef cnp.float64_t[::1] cur = np.empty(n + 1)
    cdef cnp.float64_t[::1] tmp
    cdef Py_ssize_t i, j
    cdef double diag, up, left, best
    cdef cnp.int32_t qi

    for i in range(1, m + 1):
        qi = q[i - 1]
        cur[0] = i * gap
        for j in range(1, n + 1):
            diag = prev[j - 1] + (match if u[j - 1] == qi else mismatch)
            up = prev[j] + gap
            left = cur[j - 1] + gap
            best = diag
            if up > best:
                best = up
            if left > best:
                best = left
            cur[j] = best
        tmp = prev
        prev = cur
        cur = tmp

    best = prev[0]
    for j in range(1, n + 1):
        if prev[j] > best:
            best = prev[j]
    return best
