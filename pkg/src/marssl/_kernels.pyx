# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gaussian-mixture kernels.

Same contract as ``marssl._kernels_py``; selected by ``marssl.kernels`` when
the extension is importable.
"""
import numpy as np

from libc.math cimport exp, log, INFINITY
from libc.stdlib cimport malloc, free


cdef inline double _maha(const double[:, ::1] X, Py_ssize_t n,
                         const double[:, ::1] means, const double[:, :, ::1] chols,
                         Py_ssize_t k, Py_ssize_t d, double* z) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s, acc = 0.0
    for i in range(d):
        s = X[n, i] - means[k, i]
        for j in range(i):
            s -= chols[k, i, j] * z[j]
        s /= chols[k, i, i]
        z[i] = s
        acc += s * s
    return acc


def mahalanobis(const double[:, ::1] X, const double[:, ::1] means,
                const double[:, :, ::1] chols):
    """Squared Mahalanobis distances, shape (N, K)."""
    cdef Py_ssize_t N = X.shape[0], d = X.shape[1], K = means.shape[0]
    cdef Py_ssize_t n, k
    out = np.empty((N, K), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double* z = <double*> malloc(max(d, 1) * sizeof(double))
    if z == NULL:
        raise MemoryError()
    try:
        with nogil:
            for n in range(N):
                for k in range(K):
                    o[n, k] = _maha(X, n, means, chols, k, d, z)
    finally:
        free(z)
    return out


def mixture_logpdf(const double[:, ::1] X, const double[:, ::1] means,
                   const double[:, :, ::1] chols, const double[::1] log_coef):
    """Per-row log-sum-exp over components of ``log_coef[k] - maha[n, k] / 2``."""
    cdef Py_ssize_t N = X.shape[0], d = X.shape[1], K = means.shape[0]
    cdef Py_ssize_t n, k
    cdef double m, s
    out = np.empty(N, dtype=np.float64)
    cdef double[::1] o = out
    cdef double* z = <double*> malloc(max(d, 1) * sizeof(double))
    cdef double* t = <double*> malloc(max(K, 1) * sizeof(double))
    if z == NULL or t == NULL:
        free(z)
        free(t)
        raise MemoryError()
    try:
        with nogil:
            for n in range(N):
                m = -INFINITY
                for k in range(K):
                    t[k] = log_coef[k] - 0.5 * _maha(X, n, means, chols, k, d, z)
                    if t[k] > m:
                        m = t[k]
                if m == -INFINITY:
                    o[n] = m
                    continue
                s = 0.0
                for k in range(K):
                    s += exp(t[k] - m)
                o[n] = m + log(s)
    finally:
        free(z)
        free(t)
    return out
