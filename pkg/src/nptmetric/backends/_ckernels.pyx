# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled selection kernels.

Single-pass versions of the scan kernels in py_kernels; same contracts, same
smallest-index tie-breaks (strict comparisons keep the first extreme seen).
Unlike the numpy versions these allocate no B x C temporaries, which is what
makes them worth compiling once the class count grows.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "c"

INF = float("inf")


def nearest_negative(double[:, ::1] dots, cnp.int64_t[::1] exclude):
    cdef Py_ssize_t b = dots.shape[0]
    cdef Py_ssize_t c = dots.shape[1]
    idx_arr = np.empty(b, dtype=np.int64)
    dot_arr = np.empty(b, dtype=np.float64)
    cdef cnp.int64_t[::1] idx = idx_arr
    cdef double[::1] best = dot_arr
    cdef Py_ssize_t i, j
    cdef cnp.int64_t skip, bj
    cdef double bd, d
    for i in range(b):
        skip = exclude[i]
        bj = -1
        bd = -INF
        for j in range(c):
            if j == skip:
                continue
            d = dots[i, j]
            if d > bd:
                bd = d
                bj = j
        idx[i] = bj
        best[i] = bd
    return idx_arr, dot_arr


def two_nearest_negatives(double[:, ::1] dots, cnp.int64_t[::1] exclude):
    cdef Py_ssize_t b = dots.shape[0]
    cdef Py_ssize_t c = dots.shape[1]
    j_arr = np.empty(b, dtype=np.int64)
    k_arr = np.empty(b, dtype=np.int64)
    cdef cnp.int64_t[::1] jv = j_arr
    cdef cnp.int64_t[::1] kv = k_arr
    cdef Py_ssize_t i, j
    cdef cnp.int64_t skip, j1, j2
    cdef double d1, d2, d
    for i in range(b):
        skip = exclude[i]
        j1 = -1
        j2 = -1
        d1 = -INF
        d2 = -INF
        for j in range(c):
            if j == skip:
                continue
            d = dots[i, j]
            if d > d1:
                d2 = d1
                j2 = j1
                d1 = d
                j1 = j
            elif d > d2:
                d2 = d
                j2 = j
        jv[i] = j1
        kv[i] = j2
    return j_arr, k_arr


def hard_pos_neg(double[:, ::1] dots, cnp.int64_t[::1] labels):
    cdef Py_ssize_t b = dots.shape[0]
    pos_arr = np.empty(b, dtype=np.int64)
    neg_arr = np.empty(b, dtype=np.int64)
    cdef cnp.int64_t[::1] pos = pos_arr
    cdef cnp.int64_t[::1] neg = neg_arr
    cdef Py_ssize_t i, j
    cdef cnp.int64_t pj, nj, li
    cdef double pd, nd, d
    for i in range(b):
        li = labels[i]
        pj = -1
        nj = -1
        pd = INF
        nd = -INF
        for j in range(b):
            if j == i:
                continue
            d = dots[i, j]
            if labels[j] == li:
                if d < pd:
                    pd = d
                    pj = j
            else:
                if d > nd:
                    nd = d
                    nj = j
        pos[i] = pj
        neg[i] = nj
    return pos_arr, neg_arr
