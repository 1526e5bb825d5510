# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: fused Chebyshev stencil step and batched
complex-shifted tridiagonal solves.  Semantics match _core_py exactly."""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def chebyshev_step(double[:, ::1] diag, double complex[:, ::1] px,
                   double complex[:, ::1] py, double complex[:, ::1] v,
                   double complex[:, ::1] y, double a, double b):
    """y <- a*(H v) + b*v - y, 5-point link-phase stencil, Dirichlet edges."""
    cdef Py_ssize_t n0 = v.shape[0]
    cdef Py_ssize_t n1 = v.shape[1]
    cdef Py_ssize_t i, j
    cdef double complex hv
    with nogil:
        for i in range(n0):
            for j in range(n1):
                hv = diag[i, j] * v[i, j]
                if j + 1 < n1:
                    hv = hv - px[i, j] * v[i, j + 1]
                if j > 0:
                    hv = hv - px[i, j - 1].conjugate() * v[i, j - 1]
                if i + 1 < n0:
                    hv = hv - py[i, j] * v[i + 1, j]
                if i > 0:
                    hv = hv - py[i - 1, j].conjugate() * v[i - 1, j]
                y[i, j] = a * hv + b * v[i, j] - y[i, j]


def tridiag_solve_many(double[::1] d, double[::1] e,
                       double complex[::1] shifts,
                       double complex[::1] rhs):
    """Solve (T - z) u = rhs for each z; T real symmetric tridiagonal."""
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t m = shifts.shape[0]
    out_arr = np.empty((m, n), dtype=np.complex128)
    work_arr = np.empty(n - 1, dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex[::1] cp = work_arr
    cdef Py_ssize_t k, i
    cdef double complex z, denom
    with nogil:
        for k in range(m):
            z = shifts[k]
            denom = d[0] - z
            out[k, 0] = rhs[0] / denom
            cp[0] = e[0] / denom
            for i in range(1, n - 1):
                denom = d[i] - z - e[i - 1] * cp[i - 1]
                cp[i] = e[i] / denom
                out[k, i] = (rhs[i] - e[i - 1] * out[k, i - 1]) / denom
            denom = d[n - 1] - z - e[n - 2] * cp[n - 2]
            out[k, n - 1] = (rhs[n - 1] - e[n - 2] * out[k, n - 2]) / denom
            for i in range(n - 2, -1, -1):
                out[k, i] = out[k, i] - cp[i] * out[k, i + 1]
    return out_arr
