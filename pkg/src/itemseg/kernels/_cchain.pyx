# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled linear-chain kernels; mirrors _pychain exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef double _logsumexp_row(double[::1] row, Py_ssize_t L) nogil:
    cdef double m = -INFINITY
    cdef double s = 0.0
    cdef Py_ssize_t j
    for j in range(L):
        if row[j] > m:
            m = row[j]
    if m == -INFINITY:
        return -INFINITY
    for j in range(L):
        s += exp(row[j] - m)
    return m + log(s)


def forward_backward(double[:, ::1] scores, double[:, ::1] trans):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t L = scores.shape[1]
    if n < 1:
        raise ValueError("empty sequence")

    alpha_arr = np.empty((n, L))
    beta_arr = np.empty((n, L))
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] beta = beta_arr
    tmp_arr = np.empty(L)
    cdef double[::1] tmp = tmp_arr

    cdef Py_ssize_t t, i, j
    cdef double log_z

    with nogil:
        for j in range(L):
            alpha[0, j] = scores[0, j]
        for t in range(1, n):
            for j in range(L):
                for i in range(L):
                    tmp[i] = alpha[t - 1, i] + trans[i, j]
                alpha[t, j] = scores[t, j] + _logsumexp_row(tmp, L)
        for j in range(L):
            tmp[j] = alpha[n - 1, j]
        log_z = _logsumexp_row(tmp, L)

        for j in range(L):
            beta[n - 1, j] = 0.0
        for t in range(n - 2, -1, -1):
            for i in range(L):
                for j in range(L):
                    tmp[j] = trans[i, j] + scores[t + 1, j] + beta[t + 1, j]
                beta[t, i] = _logsumexp_row(tmp, L)

    marg_arr = np.empty((n, L))
    pair_arr = np.empty((n - 1, L, L))
    cdef double[:, ::1] marg = marg_arr
    cdef double[:, :, ::1] pair = pair_arr
    cdef double row_sum

    with nogil:
        for t in range(n):
            row_sum = 0.0
            for j in range(L):
                marg[t, j] = exp(alpha[t, j] + beta[t, j] - log_z)
                row_sum += marg[t, j]
            for j in range(L):
                marg[t, j] /= row_sum
        for t in range(n - 1):
            for i in range(L):
                for j in range(L):
                    pair[t, i, j] = exp(
                        alpha[t, i] + trans[i, j]
                        + scores[t + 1, j] + beta[t + 1, j] - log_z
                    )
    return log_z, marg_arr, pair_arr


def viterbi(double[:, ::1] scores, double[:, ::1] trans):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t L = scores.shape[1]
    if n < 1:
        raise ValueError("empty sequence")

    delta_arr = np.empty(L)
    next_arr = np.empty(L)
    back_arr = np.empty((n, L), dtype=np.intp)
    path_arr = np.empty(n, dtype=np.intp)
    cdef double[::1] delta = delta_arr
    cdef double[::1] nxt = next_arr
    cdef cnp.intp_t[:, ::1] back = back_arr
    cdef cnp.intp_t[::1] path = path_arr

    cdef Py_ssize_t t, i, j, best_i
    cdef double best, cand

    with nogil:
        for j in range(L):
            delta[j] = scores[0, j]
        for t in range(1, n):
            for j in range(L):
                best = -INFINITY
                best_i = 0
                for i in range(L):
                    cand = delta[i] + trans[i, j]
                    if cand > best:
                        best = cand
                        best_i = i
                nxt[j] = scores[t, j] + best
                back[t, j] = best_i
            for j in range(L):
                delta[j] = nxt[j]
        best = -INFINITY
        best_i = 0
        for j in range(L):
            if delta[j] > best:
                best = delta[j]
                best_i = j
        path[n - 1] = best_i
        for t in range(n - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_arr
