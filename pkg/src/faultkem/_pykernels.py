"""Numpy fallback for the compiled kernels (same contracts, same results)."""

import numpy as np

BACKEND = "python"


def _fold(full, n, q):
    out = full[:n].copy()
    out[: n - 1] -= full[n:]
    return np.mod(out, q)


def negacyclic_mul(a, b, q):
    return _fold(np.convolve(a, b), a.shape[0], q)


def matvec_mul(mat, vec, q, transpose=False):
    l, n = vec.shape
    acc = np.zeros((l, 2 * n - 1), dtype=np.int64)
    for i in range(l):
        for j in range(l):
            row = mat[j, i] if transpose else mat[i, j]
            acc[i] += np.convolve(row, vec[j])
    out = acc[:, :n].copy()
    out[:, : n - 1] -= acc[:, n:]
    return np.mod(out, q)


def vec_dot(u, s, q):
    n = u.shape[1]
    acc = np.zeros(2 * n - 1, dtype=np.int64)
    for i in range(u.shape[0]):
        acc += np.convolve(u[i], s[i])
    return _fold(acc, n, q)
