# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CSR kernels: matrix-vector product and Jacobi-preconditioned CG.

Dot products are accumulated serially in index order so results are
bit-reproducible. Only the row loop of the matrix-vector product is threaded;
each output row is still summed by a single thread, so threading does not
change results either.
"""
import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt

cnp.import_array()


cdef inline void _matvec(const int[::1] indptr, const int[::1] indices,
                         const double[::1] data, const double[::1] x,
                         double[::1] out, int nthreads) noexcept nogil:
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, jj
    cdef double s
    if nthreads > 1:
        for i in prange(n, num_threads=nthreads, schedule="static"):
            s = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                s = s + data[jj] * x[indices[jj]]
            out[i] = s
    else:
        for i in range(n):
            s = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                s = s + data[jj] * x[indices[jj]]
            out[i] = s


cdef inline double _dot(const double[::1] a, const double[::1] b) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


def csr_matvec(const int[::1] indptr, const int[::1] indices, const double[::1] data,
               const double[::1] x, double[::1] out, int nthreads=1):
    """Compute ``out = A @ x`` for a CSR matrix given by its three arrays."""
    with nogil:
        _matvec(indptr, indices, data, x, out, nthreads)


def pcg(const int[::1] indptr, const int[::1] indices, const double[::1] data,
        const double[::1] b, double[::1] x, const double[::1] dinv,
        double tol, int maxiter, int nthreads=1):
    """Preconditioned CG on the recursion residual; ``x`` holds the initial guess.

    Returns ``(iterations, recursion_residual, breakdown_iteration)`` where the
    residual is relative to ``||b||`` and ``breakdown_iteration`` is -1 unless
    a non-positive curvature ``p^T A p <= 0`` was met.
    """
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i
    cdef int it = 0
    cdef int breakdown = -1
    cdef double bnorm, rz, rz_new, alpha, beta, pap, rnorm
    r_arr = np.empty(n, dtype=np.float64)
    z_arr = np.empty(n, dtype=np.float64)
    p_arr = np.empty(n, dtype=np.float64)
    q_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] r = r_arr
    cdef double[::1] z = z_arr
    cdef double[::1] p = p_arr
    cdef double[::1] q = q_arr

    with nogil:
        bnorm = sqrt(_dot(b, b))
        if bnorm == 0.0:
            for i in range(n):
                x[i] = 0.0
            rnorm = 0.0
        else:
            _matvec(indptr, indices, data, x, q, nthreads)
            for i in range(n):
                r[i] = b[i] - q[i]
                z[i] = dinv[i] * r[i]
                p[i] = z[i]
            rz = _dot(r, z)
            rnorm = sqrt(_dot(r, r)) / bnorm
            while rnorm > tol and it < maxiter:
                _matvec(indptr, indices, data, p, q, nthreads)
                pap = _dot(p, q)
                if pap <= 0.0:
                    breakdown = it
                    break
                alpha = rz / pap
                for i in range(n):
                    x[i] = x[i] + alpha * p[i]
                    r[i] = r[i] - alpha * q[i]
                    z[i] = dinv[i] * r[i]
                rz_new = _dot(r, z)
                beta = rz_new / rz
                rz = rz_new
                for i in range(n):
                    p[i] = z[i] + beta * p[i]
                it += 1
                rnorm = sqrt(_dot(r, r)) / bnorm
    return it, rnorm, breakdown
