"""Compiled distance and top-k kernels.

Every squared distance is accumulated in float64, one coordinate at a time in
ascending index order, so results do not depend on SIMD width or on how the
queries are split across threads. The block kernel vectorizes across rows,
never across the coordinates of one row.
"""

import numpy as np
from numba import njit

ROW_BLOCK = 1024
QUERY_BLOCK = 8


@njit(nogil=True, cache=True)
def squared_l2_pair(a, b):
    acc = 0.0
    for i in range(a.shape[0]):
        d = np.float64(a[i]) - np.float64(b[i])
        acc += d * d
    return acc


@njit(nogil=True, cache=True)
def _less(d1, r1, d2, r2):
    return d1 < d2 or (d1 == d2 and r1 < r2)


@njit(nogil=True, cache=True)
def _sift_down(hd, hr, hi, size, pos):
    # max-heap on (distance, rank)
    while True:
        left = 2 * pos + 1
        if left >= size:
            return
        big = left
        right = left + 1
        if right < size and _less(hd[left], hr[left], hd[right], hr[right]):
            big = right
        if _less(hd[pos], hr[pos], hd[big], hr[big]):
            hd[pos], hd[big] = hd[big], hd[pos]
            hr[pos], hr[big] = hr[big], hr[pos]
            hi[pos], hi[big] = hi[big], hi[pos]
            pos = big
        else:
            return


@njit(nogil=True, cache=True)
def _sift_up(hd, hr, hi, pos):
    while pos > 0:
        parent = (pos - 1) // 2
        if _less(hd[parent], hr[parent], hd[pos], hr[pos]):
            hd[pos], hd[parent] = hd[parent], hd[pos]
            hr[pos], hr[parent] = hr[parent], hr[pos]
            hi[pos], hi[parent] = hi[parent], hi[pos]
            pos = parent
        else:
            return


@njit(nogil=True, cache=True)
def topk_range(data_t, ranks, queries, exclude, k, out_idx, out_dist, start, stop):
    """Fill ``out_idx``/``out_dist`` rows ``start:stop`` with each query's top-k.

    ``data_t`` is the (dim, n) float32 matrix, ``ranks`` the position of each
    entry in ascending item-id order (tie-break key), ``exclude`` one entry
    index per query or -1. Unfilled slots keep index -1 and distance inf.
    """
    dim = data_t.shape[0]
    n = data_t.shape[1]
    acc = np.empty((QUERY_BLOCK, ROW_BLOCK), dtype=np.float64)
    hd = np.empty((QUERY_BLOCK, k), dtype=np.float64)
    hr = np.empty((QUERY_BLOCK, k), dtype=np.int64)
    hi = np.empty((QUERY_BLOCK, k), dtype=np.int64)
    sizes = np.zeros(QUERY_BLOCK, dtype=np.int64)

    for q0 in range(start, stop, QUERY_BLOCK):
        nq = min(QUERY_BLOCK, stop - q0)
        sizes[:] = 0
        for r0 in range(0, n, ROW_BLOCK):
            nr = min(ROW_BLOCK, n - r0)
            acc[:nq, :nr] = 0.0
            for j in range(dim):
                row = data_t[j, r0:r0 + nr]
                for q in range(nq):
                    qj = np.float64(queries[q0 + q, j])
                    a = acc[q]
                    for i in range(nr):
                        d = np.float64(row[i]) - qj
                        a[i] += d * d
            for q in range(nq):
                ex = exclude[q0 + q]
                for i in range(nr):
                    idx = r0 + i
                    if idx == ex:
                        continue
                    dist = acc[q, i]
                    rank = ranks[idx]
                    s = sizes[q]
                    if s < k:
                        hd[q, s] = dist
                        hr[q, s] = rank
                        hi[q, s] = idx
                        _sift_up(hd[q], hr[q], hi[q], s)
                        sizes[q] = s + 1
                    elif _less(dist, rank, hd[q, 0], hr[q, 0]):
                        hd[q, 0] = dist
                        hr[q, 0] = rank
                        hi[q, 0] = idx
                        _sift_down(hd[q], hr[q], hi[q], k, 0)
        for q in range(nq):
            # heap-sort in place: repeatedly move the max to the end
            s = sizes[q]
            for end in range(s - 1, 0, -1):
                hd[q, 0], hd[q, end] = hd[q, end], hd[q, 0]
                hr[q, 0], hr[q, end] = hr[q, end], hr[q, 0]
                hi[q, 0], hi[q, end] = hi[q, end], hi[q, 0]
                _sift_down(hd[q], hr[q], hi[q], end, 0)
            for t in range(s):
                out_dist[q0 + q, t] = hd[q, t]
                out_idx[q0 + q, t] = hi[q, t]
            for t in range(s, k):
                out_dist[q0 + q, t] = np.inf
                out_idx[q0 + q, t] = -1
