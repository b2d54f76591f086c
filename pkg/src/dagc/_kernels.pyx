# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Semantics mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def csr_spmm(const long long[::1] indptr, const long long[::1] indices,
             const double[::1] data, const double[:, ::1] dense):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = dense.shape[1]
    out_arr = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, e, c, col
    cdef double w
    with nogil:
        for r in range(n):
            for e in range(indptr[r], indptr[r + 1]):
                w = data[e]
                col = indices[e]
                for c in range(d):
                    out[r, c] += w * dense[col, c]
    return out_arr


def topk_rows(const double[:, ::1] sim, Py_ssize_t k, Py_ssize_t row_offset):
    cdef Py_ssize_t b = sim.shape[0]
    cdef Py_ssize_t n = sim.shape[1]
    out_arr = np.empty((b, k), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    vals_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] vals = vals_arr
    cdef Py_ssize_t i, j, filled, pos, diag
    cdef double s
    with nogil:
        for i in range(b):
            diag = i + row_offset
            filled = 0
            for j in range(n):
                if j == diag:
                    continue
                s = sim[i, j]
                if filled == k and not (s > vals[k - 1]):
                    continue
                pos = filled if filled < k else k - 1
                # insertion keeps earlier (smaller) indices ahead on ties
                while pos > 0 and s > vals[pos - 1]:
                    if pos < k:
                        vals[pos] = vals[pos - 1]
                        out[i, pos] = out[i, pos - 1]
                    pos -= 1
                vals[pos] = s
                out[i, pos] = j
                if filled < k:
                    filled += 1
    return out_arr


def hungarian(const double[:, ::1] cost):
    cdef Py_ssize_t m = cost.shape[0]
    u_arr = np.zeros(m + 1)
    v_arr = np.zeros(m + 1)
    minv_arr = np.empty(m + 1)
    p_arr = np.zeros(m + 1, dtype=np.int64)
    way_arr = np.zeros(m + 1, dtype=np.int64)
    used_arr = np.zeros(m + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, minv = minv_arr
    cdef long long[::1] p = p_arr, way = way_arr
    cdef unsigned char[::1] used = used_arr
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double cur, delta
    with nogil:
        for i in range(1, m + 1):
            p[0] = i
            j0 = 0
            for j in range(m + 1):
                minv[j] = INFINITY
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = p[j0]
                delta = INFINITY
                j1 = 0
                for j in range(1, m + 1):
                    if not used[j]:
                        cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                        if cur < minv[j]:
                            minv[j] = cur
                            way[j] = j0
                        if minv[j] < delta:
                            delta = minv[j]
                            j1 = j
                for j in range(m + 1):
                    if used[j]:
                        u[p[j]] += delta
                        v[j] -= delta
                    else:
                        minv[j] -= delta
                j0 = j1
                if p[j0] == 0:
                    break
            while True:
                j1 = way[j0]
                p[j0] = p[j1]
                j0 = j1
                if j0 == 0:
                    break
    assignment = np.empty(m, dtype=np.int64)
    for j in range(1, m + 1):
        assignment[p[j] - 1] = j - 1
    return assignment
