# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled schoolbook kernels for arithmetic in Z_q[x]/(x^n + 1).

Products accumulate into a flat 2n buffer (branch-free inner loop, lets
the compiler vectorize) and the negacyclic fold plus modular reduction
happen once at the end. int64 accumulation is safe up to l*n*q^2 < 2^63
for every supported modulus. Zero coefficients short-circuit, so the
single-coefficient attack ciphertexts cost almost nothing.
"""

import numpy as np

BACKEND = "compiled"


cdef inline void _accum(long long* full, const long long* a, const long long* b,
                        Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef long long ai
    for i in range(n):
        ai = a[i]
        if ai == 0:
            continue
        for j in range(n):
            full[i + j] += ai * b[j]


cdef _fold(long long[::1] full, Py_ssize_t n, long long q):
    out_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef Py_ssize_t i
    cdef long long v
    for i in range(n):
        v = (full[i] - full[i + n]) % q
        if v < 0:
            v += q
        out[i] = v
    return out_arr


def negacyclic_mul(long long[::1] a, long long[::1] b, long long q):
    cdef Py_ssize_t n = a.shape[0]
    full_arr = np.zeros(2 * n, dtype=np.int64)
    cdef long long[::1] full = full_arr
    _accum(&full[0], &a[0], &b[0], n)
    return _fold(full, n, q)


def matvec_mul(long long[:, :, ::1] mat, long long[:, ::1] vec, long long q,
               bint transpose=False):
    """(mat @ vec)[i] = sum_j mat[i, j] * vec[j] over R_q; mat[j, i] if transposed."""
    cdef Py_ssize_t l = mat.shape[0]
    cdef Py_ssize_t n = mat.shape[2]
    cdef Py_ssize_t i, j
    out_arr = np.empty((l, n), dtype=np.int64)
    full_arr = np.empty(2 * n, dtype=np.int64)
    cdef long long[::1] full = full_arr
    for i in range(l):
        full_arr[:] = 0
        for j in range(l):
            if transpose:
                _accum(&full[0], &mat[j, i, 0], &vec[j, 0], n)
            else:
                _accum(&full[0], &mat[i, j, 0], &vec[j, 0], n)
        out_arr[i] = _fold(full, n, q)
    return out_arr


def vec_dot(long long[:, ::1] u, long long[:, ::1] s, long long q):
    """Inner product sum_i u[i] * s[i] of two vectors over R_q."""
    cdef Py_ssize_t l = u.shape[0]
    cdef Py_ssize_t n = u.shape[1]
    cdef Py_ssize_t i
    full_arr = np.zeros(2 * n, dtype=np.int64)
    cdef long long[::1] full = full_arr
    for i in range(l):
        _accum(&full[0], &u[i, 0], &s[i, 0], n)
    return _fold(full, n, q)
