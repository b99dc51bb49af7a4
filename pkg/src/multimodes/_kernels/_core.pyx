# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled inner kernels.

Hot loops of the sampling pipeline: banded Cholesky factorization, banded
forward/backward substitution, CSR matrix-vector products and the
scatter-add used by finite element assembly.  `_fallback.py` provides the
same four functions on top of NumPy/SciPy; both backends must stay
call-compatible.

Band storage convention (lower triangle, C-contiguous):
    ab[j, k] = A[j + k, j]   for 0 <= k <= bandwidth, j + k < n
Entries past the matrix edge are ignored (and must be zero on input).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def band_cholesky(const double[:, ::1] ab):
    """Cholesky factor of an SPD band matrix, same band layout as the input.

    Raises numpy.linalg.LinAlgError on a non-positive pivot.
    """
    cdef Py_ssize_t n = ab.shape[0]
    cdef Py_ssize_t bw = ab.shape[1] - 1
    out = np.array(ab, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] a = out
    cdef Py_ssize_t j, k, i, m
    cdef double d, ljk
    for j in range(n):
        d = a[j, 0]
        if not d > 0.0:
            raise np.linalg.LinAlgError(
                "non-positive pivot %r at column %d" % (d, j)
            )
        d = sqrt(d)
        a[j, 0] = d
        m = bw if bw < n - 1 - j else n - 1 - j
        for k in range(1, m + 1):
            a[j, k] /= d
        for k in range(1, m + 1):
            ljk = a[j, k]
            if ljk != 0.0:
                for i in range(k, m + 1):
                    a[j + k, i - k] -= a[j, i] * ljk
    return out


def band_solve(const double[:, ::1] fac, const double[::1] b):
    """Solve A x = b given the band Cholesky factor (forward + backward pass)."""
    cdef Py_ssize_t n = fac.shape[0]
    cdef Py_ssize_t bw = fac.shape[1] - 1
    if b.shape[0] != n:
        raise ValueError("rhs length %d != factor dimension %d" % (b.shape[0], n))
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] x = out
    cdef Py_ssize_t i, k, m
    cdef double s
    for i in range(n):
        s = b[i]
        m = bw if bw < i else i
        for k in range(1, m + 1):
            s -= fac[i - k, k] * x[i - k]
        x[i] = s / fac[i, 0]
    for i in range(n - 1, -1, -1):
        s = x[i]
        m = bw if bw < n - 1 - i else n - 1 - i
        for k in range(1, m + 1):
            s -= fac[i, k] * x[i + k]
        x[i] = s / fac[i, 0]
    return out


def csr_matvec(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               const double[::1] data, const double[::1] x):
    """y = A x for a CSR matrix with int64 index arrays."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef Py_ssize_t i, p
    cdef double s
    for i in range(n):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * x[indices[p]]
        y[i] = s
    return out


def scatter_add(double[::1] out, const cnp.int64_t[::1] idx,
                const double[::1] vals):
    """out[idx[i]] += vals[i], applied in index order."""
    cdef Py_ssize_t m = idx.shape[0]
    if vals.shape[0] != m:
        raise ValueError("index/value length mismatch")
    cdef Py_ssize_t i
    for i in range(m):
        out[idx[i]] += vals[i]
