# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Semantics match labelpool._kernels._numpy; see that module for the
argument contracts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log, sqrt

cnp.import_array()


def divergence_matrix(rows, int kind):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(rows, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t d = p.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] logp
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, n), dtype=np.float64)
    cdef Py_ssize_t i, j, y
    cdef double s, a, b, den
    cdef double inf = float("inf")

    if kind == 0:
        logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                s = 0.0
                for y in range(d):
                    a = p[i, y]
                    if a > 0.0:
                        if p[j, y] <= 0.0:
                            s = inf
                            break
                        s += a * (logp[i, y] - logp[j, y])
                out[i, j] = s
    elif kind == 1:
        for i in range(n):
            for j in range(n):
                s = 0.0
                for y in range(d):
                    a = p[i, y] - p[j, y]
                    s += a * a
                out[i, j] = sqrt(s)
    elif kind == 2:
        for i in range(n):
            for j in range(n):
                s = 0.0
                for y in range(d):
                    a = fabs(p[i, y] - p[j, y])
                    if a > s:
                        s = a
                out[i, j] = s
    elif kind == 3:
        for i in range(n):
            for j in range(n):
                s = 0.0
                for y in range(d):
                    den = p[i, y] + p[j, y]
                    if den > 0.0:
                        s += fabs(p[i, y] - p[j, y]) / den
                out[i, j] = s
    else:
        raise ValueError(f"unknown kind code {kind}")
    return out


def categorical_counts(cdf, src, u, m):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] s = np.ascontiguousarray(src, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] mm = np.ascontiguousarray(m, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0]
    cdef Py_ssize_t d = c.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.zeros((n, d), dtype=np.int64)
    cdef Py_ssize_t i, v, y, row, t = 0
    cdef double draw
    for i in range(n):
        row = s[i]
        for v in range(mm[i]):
            draw = uu[t]
            t += 1
            y = 0
            while y < d - 1 and draw >= c[row, y]:
                y += 1
            out[i, y] += 1
    return out


def lda_sweep(doc, word, z, n_iz, n_zw, n_z, double alpha, double beta, u):
    cdef cnp.ndarray[cnp.int32_t, ndim=1] dd = doc
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ww = word
    cdef cnp.ndarray[cnp.int32_t, ndim=1] zz = z
    cdef cnp.ndarray[cnp.int64_t, ndim=2] niz = n_iz
    cdef cnp.ndarray[cnp.int64_t, ndim=2] nzw = n_zw
    cdef cnp.ndarray[cnp.int64_t, ndim=1] nz = n_z
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t p = nzw.shape[0]
    cdef Py_ssize_t d = nzw.shape[1]
    cdef Py_ssize_t t_count = dd.shape[0]
    cdef double beta_d = beta * d
    cdef cnp.ndarray[cnp.float64_t, ndim=1] weights = np.empty(p, dtype=np.float64)
    cdef Py_ssize_t t, i, w, k, j
    cdef double total, wj, threshold, run
    for t in range(t_count):
        i = dd[t]
        w = ww[t]
        k = zz[t]
        niz[i, k] -= 1
        nzw[k, w] -= 1
        nz[k] -= 1
        total = 0.0
        for j in range(p):
            wj = (nzw[j, w] + beta) / (nz[j] + beta_d) * (niz[i, j] + alpha)
            weights[j] = wj
            total += wj
        threshold = uu[t] * total
        run = 0.0
        k = p - 1
        for j in range(p):
            run += weights[j]
            if run > threshold:
                k = j
                break
        zz[t] = k
        niz[i, k] += 1
        nzw[k, w] += 1
        nz[k] += 1
