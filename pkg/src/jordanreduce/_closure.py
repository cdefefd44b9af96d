"""Exact integer check that a symmetric partition is closed under XY + YX.

For cells (a, b) the entry of B_i B_j + B_j B_i is the number of k with
{labels[a, k], labels[k, b]} = {i, j}.  The span is closed iff every cell sees
the same multiset of unordered label pairs as the first cell of its part.
Only cells with a <= b are visited: the multiset at (b, a) is the same one.
Labels are symmetric, so L[k, b] is read as L[b, k] to stay on rows.
"""

import warnings

import numpy as np
from numba import njit, prange

# an old system TBB only makes numba fall back to another threading layer
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

# per-part reference tables of K**2 counts are kept while K**3 stays below this
COUNT_TABLE_LIMIT = 1 << 26


@njit(cache=True, inline="always")
def _code(i, j, K):
    if i <= j:
        return i * K + j
    return j * K + i


@njit(cache=True, parallel=True)
def _mismatch_counting(L, K, rep_a, rep_b):
    N = L.shape[0]
    ref = np.zeros((K, K * K), dtype=np.int32)
    for p in range(K):
        for k in range(N):
            ref[p, _code(L[rep_a[p], k], L[rep_b[p], k], K)] += 1
    pc = np.empty((K, K), dtype=np.int64)
    for i in range(K):
        for j in range(K):
            pc[i, j] = _code(i, j, K)
    worst = np.zeros(N, dtype=np.int64)
    for a in prange(N):
        counts = np.zeros(K * K, dtype=np.int32)
        codes = np.empty(N, dtype=np.int64)
        w = 0
        for b in range(a, N):
            p = L[a, b]
            if rep_a[p] == a and rep_b[p] == b:
                continue
            for k in range(N):
                c = pc[L[a, k], L[b, k]]
                codes[k] = c
                counts[c] += 1
            # both multisets have N elements, so agreeing on the cell's codes suffices
            refp = ref[p]
            for k in range(N):
                c = codes[k]
                v = abs(counts[c] - refp[c])
                if v > w:
                    w = v
            for k in range(N):
                counts[codes[k]] = 0
        worst[a] = w
    return worst.max()


@njit(cache=True, parallel=True)
def _mismatch_sorting(L, K, rep_a, rep_b):
    N = L.shape[0]
    ref = np.empty((K, N), dtype=np.int64)
    for p in range(K):
        ra = rep_a[p]
        rb = rep_b[p]
        row = np.empty(N, dtype=np.int64)
        for k in range(N):
            row[k] = _code(L[ra, k], L[rb, k], K)
        ref[p] = np.sort(row)
    worst = np.zeros(N, dtype=np.int64)
    for a in prange(N):
        row = np.empty(N, dtype=np.int64)
        w = 0
        for b in range(a, N):
            p = L[a, b]
            if rep_a[p] == a and rep_b[p] == b:
                continue
            for k in range(N):
                row[k] = _code(L[a, k], L[b, k], K)
            srow = np.sort(row)
            for k in range(N):
                if srow[k] != ref[p, k]:
                    w = 1
                    break
        worst[a] = w
    return worst.max()


def jordan_closure_mismatch(labels: np.ndarray, n_parts: int) -> int:
    """Largest integer deviation of any B_i B_j + B_j B_i from being constant on parts.

    Returns 0 exactly when the span of the part matrices is closed under the
    Jordan product.  With very many parts the sorted-multiset comparison is
    used and any mismatch is reported as 1.
    """
    L = np.ascontiguousarray(labels, dtype=np.int64)
    flat = L.ravel()
    _, first = np.unique(flat, return_index=True)
    rep_a = (first // L.shape[0]).astype(np.int64)
    rep_b = (first % L.shape[0]).astype(np.int64)
    if n_parts ** 3 <= COUNT_TABLE_LIMIT:
        return int(_mismatch_counting(L, n_parts, rep_a, rep_b))
    return int(_mismatch_sorting(L, n_parts, rep_a, rep_b))
