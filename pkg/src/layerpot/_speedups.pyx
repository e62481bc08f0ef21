# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled loops for the principal-part kernels (same contracts as ``_kernels_py``)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline double halfpow(double q, Py_ssize_t n) nogil:
    # q ** (n / 2) without the general pow() call
    cdef double r = 1.0
    cdef Py_ssize_t j
    for j in range(n // 2):
        r = r * q
    if n % 2:
        r = r * sqrt(q)
    return r


def principal_dl(const double[:, ::1] z, const double[:, ::1] nu_y, const double[:, ::1] a2inv, double scale):
    cdef Py_ssize_t N = z.shape[0], n = z.shape[1], i, j, k
    cdef double q, zn, s
    out = np.empty(N)
    cdef double[::1] o = out
    with nogil:
        for i in range(N):
            q = 0.0
            zn = 0.0
            for j in range(n):
                s = 0.0
                for k in range(n):
                    s = s + a2inv[j, k] * z[i, k]
                q = q + z[i, j] * s
                zn = zn + z[i, j] * nu_y[i, j]
            o[i] = -scale * zn / halfpow(q, n)
    return out


def principal_tangential(const double[:, ::1] z, const double[:, ::1] nu_x, const double[:, ::1] nu_y,
                         const double[:, ::1] a2inv, double scale):
    cdef Py_ssize_t N = z.shape[0], n = z.shape[1], i, j, k
    cdef double q, zn, qn, c1, c2, d1, d2
    cdef double w[8]
    if n > 8:
        raise ValueError("compiled kernels support n <= 8")
    J1 = np.empty((N, n))
    J2 = np.empty((N, n))
    cdef double[:, ::1] v1 = J1
    cdef double[:, ::1] v2 = J2
    with nogil:
        for i in range(N):
            q = 0.0
            zn = 0.0
            for j in range(n):
                w[j] = 0.0
                for k in range(n):
                    w[j] = w[j] + a2inv[j, k] * z[i, k]
                q = q + w[j] * z[i, j]
                zn = zn + z[i, j] * nu_y[i, j]
            qn = 1.0 / halfpow(q, n)
            c1 = scale * n * zn * qn / q
            c2 = -scale * qn
            d1 = 0.0
            d2 = 0.0
            for j in range(n):
                v1[i, j] = c1 * w[j]
                v2[i, j] = c2 * nu_y[i, j]
                d1 = d1 + nu_x[i, j] * v1[i, j]
                d2 = d2 + nu_x[i, j] * v2[i, j]
            for j in range(n):
                v1[i, j] = v1[i, j] - nu_x[i, j] * d1
                v2[i, j] = v2[i, j] - nu_x[i, j] * d2
    return J1, J2


def riesz(const double[:, ::1] z, Py_ssize_t h):
    cdef Py_ssize_t N = z.shape[0], n = z.shape[1], i, j
    cdef double r2
    out = np.empty(N)
    cdef double[::1] o = out
    with nogil:
        for i in range(N):
            r2 = 0.0
            for j in range(n):
                r2 = r2 + z[i, j] * z[i, j]
            o[i] = z[i, h] / halfpow(r2, n)
    return out
