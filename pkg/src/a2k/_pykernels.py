"""Pure numpy fallback for the compiled kernels in ``_kernels.pyx``.

Same signatures, same float64 accumulation and float32 storage. Results
agree with the compiled core to within float32 rounding; they are not
guaranteed bitwise equal since numpy's pairwise summation differs from
the compiled left-to-right scan in ``softmax_rows``.
"""

import numpy as np


def matmul_nt(a, b):
    """Batched ``a @ b.T``: (G, M, K) x (G, N, K) -> (G, M, N) float32."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ValueError("matmul_nt: operand shapes disagree")
    out = np.matmul(a.astype(np.float64), b.astype(np.float64).transpose(0, 2, 1))
    return out.astype(np.float32)


def softmax_rows(x):
    """Row-wise max-shifted softmax of a (R, L) float32 matrix."""
    x64 = np.asarray(x, dtype=np.float64)
    if x64.size == 0:
        return np.empty(x64.shape, dtype=np.float32)
    e = np.exp(x64 - x64.max(axis=1, keepdims=True))
    e /= e.sum(axis=1, keepdims=True)
    return e.astype(np.float32)


def argmax_rows(x):
    """First index of the row maximum of a (R, L) float32 matrix."""
    x = np.asarray(x, dtype=np.float32)
    if x.shape[1] == 0:
        raise ValueError("argmax over an empty axis")
    # np.argmax returns the first occurrence on ties
    return np.argmax(x, axis=1).astype(np.int64)
