# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for dense linear time stepping.

The integrators reduce homogeneous implicit steps to matrix recurrences
x_{k+1} = S x_k (midpoint) or x_{k+1} = S1 x_k + S2 x_{k-1} (BDF2); these
loops apply them with BLAS dgemv and no per-step Python overhead.
"""

from scipy.linalg.cython_blas cimport dcopy, dgemv

import numpy as np


cdef inline void _gemv_rowmajor(double[:, ::1] A, double* x, double* y,
                                double beta) noexcept nogil:
    # y = A @ x + beta * y for C-contiguous A, via dgemv on the transpose.
    cdef char trans = b'T'
    cdef int n = <int> A.shape[0]
    cdef int m = <int> A.shape[1]
    cdef int inc = 1
    cdef double one = 1.0
    dgemv(&trans, &m, &n, &one, &A[0, 0], &m, x, &inc, &beta, y, &inc)


def orbit_one(double[:, ::1] S, double[::1] x0, long nsteps, long stride,
              double[:, ::1] out):
    """Run x_{k+1} = S x_k, writing every stride-th state (incl. x0) into out."""
    cdef long k, row = 0
    cdef int ni = <int> S.shape[0]
    cdef int inc = 1
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double[::1] y = np.empty(S.shape[0], dtype=np.float64)

    dcopy(&ni, &x[0], &inc, &out[0, 0], &inc)
    row = 1
    with nogil:
        for k in range(1, nsteps + 1):
            _gemv_rowmajor(S, &x[0], &y[0], 0.0)
            dcopy(&ni, &y[0], &inc, &x[0], &inc)
            if k % stride == 0:
                dcopy(&ni, &x[0], &inc, &out[row, 0], &inc)
                row += 1
    return row


def orbit_two(double[:, ::1] S1, double[:, ::1] S2, double[::1] x0,
              double[::1] x1, long nsteps, long stride, double[:, ::1] out):
    """Run x_{k+1} = S1 x_k + S2 x_{k-1} starting from (x0, x1)."""
    cdef long k, row = 0
    cdef int ni = <int> S1.shape[0]
    cdef int inc = 1
    cdef double[::1] xp = np.array(x0, dtype=np.float64)
    cdef double[::1] xc = np.array(x1, dtype=np.float64)
    cdef double[::1] y = np.empty(S1.shape[0], dtype=np.float64)

    dcopy(&ni, &xp[0], &inc, &out[0, 0], &inc)
    row = 1
    if stride == 1:
        dcopy(&ni, &xc[0], &inc, &out[row, 0], &inc)
        row += 1
    with nogil:
        for k in range(2, nsteps + 1):
            _gemv_rowmajor(S1, &xc[0], &y[0], 0.0)
            _gemv_rowmajor(S2, &xp[0], &y[0], 1.0)
            dcopy(&ni, &xc[0], &inc, &xp[0], &inc)
            dcopy(&ni, &y[0], &inc, &xc[0], &inc)
            if k % stride == 0:
                dcopy(&ni, &xc[0], &inc, &out[row, 0], &inc)
                row += 1
    return row
