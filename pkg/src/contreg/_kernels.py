"""O(T^2) weighted double sums over teacher Gram matrices.

Each kernel exists twice: an ``@njit`` loop and a vectorized numpy version.
The numba path is used when numba imports and ``CONTREG_DISABLE_NUMBA`` is not
set to a truthy value; the choice is made once at import time.
"""
import os

import numpy as np

_FLAG = os.environ.get("CONTREG_DISABLE_NUMBA", "").strip().lower()

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def corr_double_sum_numpy(gram, pow_a, pow_b):
    """sum_{i,j} a^(T - max(i,j) + 1) b^|i-j| G[i,j] with 1-based i, j.

    ``pow_a[k] = a**k`` and ``pow_b[k] = b**k`` for ``k = 0..T``.
    """
    T = gram.shape[0]
    idx = np.arange(1, T + 1)
    wa = pow_a[T - np.maximum.outer(idx, idx) + 1]
    wb = pow_b[np.abs(np.subtract.outer(idx, idx))]
    return float(np.sum(wa * wb * gram))


def noreg_pair_sum_numpy(gram, pow_q):
    """sum_i q^(T-i) sum_k ||w_k - w_i||^2 from the Gram matrix of teachers."""
    T = gram.shape[0]
    diag = np.diag(gram)
    dist = diag[:, None] + diag[None, :] - 2.0 * gram
    np.maximum(dist, 0.0, out=dist)
    w = pow_q[T - np.arange(1, T + 1)]
    return float(w @ dist.sum(axis=0))


if HAS_NUMBA:

    @njit(cache=True)
    def corr_double_sum_numba(gram, pow_a, pow_b):
        T = gram.shape[0]
        total = 0.0
        for i in range(T):
            # diagonal: max = i+1, |i-j| = 0
            total += pow_a[T - i] * gram[i, i]
            acc = 0.0
            for j in range(i):
                acc += pow_b[i - j] * gram[i, j]
            total += 2.0 * pow_a[T - i] * acc
        return total

    @njit(cache=True)
    def noreg_pair_sum_numba(gram, pow_q):
        T = gram.shape[0]
        total = 0.0
        for i in range(T):
            s = 0.0
            for k in range(T):
                dk = gram[k, k] + gram[i, i] - 2.0 * gram[k, i]
                if dk > 0.0:
                    s += dk
            total += pow_q[T - 1 - i] * s
        return total

else:  # pragma: no cover
    corr_double_sum_numba = None
    noreg_pair_sum_numba = None


def corr_double_sum(gram, pow_a, pow_b):
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    if USE_NUMBA:
        return float(corr_double_sum_numba(gram, pow_a, pow_b))
    return corr_double_sum_numpy(gram, pow_a, pow_b)


def noreg_pair_sum(gram, pow_q):
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    if USE_NUMBA:
        return float(noreg_pair_sum_numba(gram, pow_q))
    return noreg_pair_sum_numpy(gram, pow_q)
