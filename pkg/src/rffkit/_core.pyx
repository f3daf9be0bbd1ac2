# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors ``_core_py`` exactly: same signatures, same accumulation order,
same index clamping.  The dense path runs the projection through BLAS
dgemm and fuses the cosine into the output buffer; the sparse path and
the subset enumeration are plain C loops.
"""

import numpy as np

from libc.math cimport cos, exp
from libc.stdint cimport int64_t
from scipy.linalg.cython_blas cimport dgemm


def cos_features_dense(const double[:, ::1] X, const double[:, ::1] omega,
                       const double[::1] b, double scale):
    cdef int N = X.shape[0]
    cdef int d = X.shape[1]
    cdef int D = omega.shape[0]
    out_arr = np.empty((N, D), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double alpha = 1.0, beta = 0.0
    cdef char ct = b'T', cn = b'N'
    cdef Py_ssize_t i, j
    if N == 0 or D == 0:
        return out_arr
    # Row-major out (N, D) is column-major (D, N):
    # out_cm = omega_cm(d, D)^T @ X_cm(d, N) computes X @ omega.T.
    if d > 0:
        dgemm(&ct, &cn, &D, &N, &d, &alpha,
              <double*>&omega[0, 0], &d, <double*>&X[0, 0], &d,
              &beta, &out[0, 0], &D)
    else:
        out_arr.fill(0.0)
    with nogil:
        for i in range(N):
            for j in range(D):
                out[i, j] = scale * cos(out[i, j] + b[j])
    return out_arr


def cos_features_sparse(const double[:, ::1] X, const int64_t[:, ::1] support,
                        const double[:, ::1] values, const double[::1] b, double scale):
    cdef Py_ssize_t N = X.shape[0]
    cdef Py_ssize_t D = support.shape[0]
    cdef Py_ssize_t k = support.shape[1]
    out_arr = np.empty((N, D), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n, i, j
    cdef double acc
    with nogil:
        for n in range(N):
            for i in range(D):
                acc = 0.0
                for j in range(k):
                    acc += X[n, support[i, j]] * values[i, j]
                out[n, i] = scale * cos(acc + b[i])
    return out_arr


def floyd_subsets(const double[:, ::1] u, long d):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t k = u.shape[1]
    if k > d:
        raise ValueError(f"cannot draw {k} distinct coordinates from {d}")
    out_arr = np.empty((n, k), dtype=np.int64)
    cdef int64_t[:, ::1] sel = out_arr
    cdef Py_ssize_t i, step, p, q
    cdef int64_t j, t, key
    cdef bint dup
    with nogil:
        for i in range(n):
            for step in range(k):
                j = d - k + step
                t = <int64_t>(u[i, step] * (j + 1))
                if t > j:  # guard the u -> floor(u*(j+1)) edge at u ~ 1
                    t = j
                dup = False
                for p in range(step):
                    if sel[i, p] == t:
                        dup = True
                        break
                sel[i, step] = j if dup else t
            # insertion sort; k is tiny
            for p in range(1, k):
                key = sel[i, p]
                q = p - 1
                while q >= 0 and sel[i, q] > key:
                    sel[i, q + 1] = sel[i, q]
                    q -= 1
                sel[i, q + 1] = key
    return out_arr


def subset_exp_mean(const double[::1] w, long k):
    cdef long d = w.shape[0]
    cdef long[::1] c = np.arange(k, dtype=np.int_)
    cdef double total = 0.0
    cdef long count = 0
    cdef long i, j
    cdef double s
    with nogil:
        while True:
            s = 0.0
            for j in range(k):
                s += w[c[j]]
            total += exp(-s)
            count += 1
            # lexicographic successor
            i = k - 1
            while i >= 0 and c[i] == i + d - k:
                i -= 1
            if i < 0:
                break
            c[i] += 1
            for j in range(i + 1, k):
                c[j] = c[j - 1] + 1
    return total / count
