"""Compiled hot kernels.

Every routine here has a numpy twin in ``_pykernels`` with the same
signature; ``a2k._backend`` picks one at import.

Reduction order (fixed, so results are bitwise reproducible):

* ``matmul_nt`` widens each batch slice to float64 and hands it to BLAS
  ``dgemm``; the float64 result is rounded to float32 once.
* ``softmax_rows`` scans each row left to right: max, then a sequential
  float64 sum of ``exp(x - max)``, then one division per element.
* ``argmax_rows`` scans left to right and keeps the first maximum.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def matmul_nt(const float[:, :, ::1] a, const float[:, :, ::1] b):
    """Batched ``a @ b.T``: (G, M, K) x (G, N, K) -> (G, M, N) float32."""
    cdef Py_ssize_t G = a.shape[0], M = a.shape[1], K = a.shape[2]
    cdef Py_ssize_t N = b.shape[1]
    if b.shape[0] != G or b.shape[2] != K:
        raise ValueError("matmul_nt: operand shapes disagree")
    out_arr = np.zeros((G, M, N), dtype=np.float32)
    if G == 0 or M == 0 or N == 0 or K == 0:
        return out_arr
    cdef float[:, :, ::1] out = out_arr
    cdef double[:, ::1] a64 = np.empty((M, K), dtype=np.float64)
    cdef double[:, ::1] b64 = np.empty((N, K), dtype=np.float64)
    cdef double[:, ::1] c64 = np.empty((M, N), dtype=np.float64)
    cdef Py_ssize_t g, i, j
    cdef int m = <int>N, n = <int>M, k = <int>K
    cdef int lda = <int>K, ldb = <int>K, ldc = <int>N
    cdef double alpha = 1.0, beta = 0.0
    cdef char transa = b'T', transb = b'N'
    with nogil:
        for g in range(G):
            for i in range(M):
                for j in range(K):
                    a64[i, j] = a[g, i, j]
            for i in range(N):
                for j in range(K):
                    b64[i, j] = b[g, i, j]
            # row-major C = A B^T is column-major C^T = B A^T
            dgemm(&transa, &transb, &m, &n, &k, &alpha, &b64[0, 0], &lda,
                  &a64[0, 0], &ldb, &beta, &c64[0, 0], &ldc)
            for i in range(M):
                for j in range(N):
                    out[g, i, j] = <float>c64[i, j]
    return out_arr


def softmax_rows(const float[:, ::1] x):
    """Row-wise max-shifted softmax of a (R, L) float32 matrix."""
    cdef Py_ssize_t R = x.shape[0], L = x.shape[1]
    out_arr = np.empty((R, L), dtype=np.float32)
    if R == 0 or L == 0:
        return out_arr
    cdef float[:, ::1] out = out_arr
    cdef double[::1] buf = np.empty(L, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double mx, s, inv
    with nogil:
        for i in range(R):
            mx = x[i, 0]
            for j in range(1, L):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(L):
                buf[j] = exp(<double>x[i, j] - mx)
                s = s + buf[j]
            inv = 1.0 / s
            for j in range(L):
                out[i, j] = <float>(buf[j] * inv)
    return out_arr


def argmax_rows(const float[:, ::1] x):
    """First index of the row maximum of a (R, L) float32 matrix."""
    cdef Py_ssize_t R = x.shape[0], L = x.shape[1]
    out_arr = np.zeros(R, dtype=np.int64)
    if L == 0:
        raise ValueError("argmax over an empty axis")
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t i, j, best
    cdef float mx
    with nogil:
        for i in range(R):
            best = 0
            mx = x[i, 0]
            for j in range(1, L):
                if x[i, j] > mx:
                    mx = x[i, j]
                    best = j
            out[i] = best
    return out_arr
