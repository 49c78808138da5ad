"""Brute-force k-nearest-neighbour regression, numba and chunked-numpy.

Both paths sum sequentially so they agree bit for bit; equal distances keep
the lower training index first.
"""

import numpy as np

from .._accel import njit, use_numba


@njit
def _knn_nb(Xtr, ytr, Xq, k):
    n, d = Xtr.shape
    out = np.empty(Xq.shape[0])
    best_d = np.empty(k)
    best_i = np.empty(k, dtype=np.int64)
    for q in range(Xq.shape[0]):
        m = 0
        for i in range(n):
            acc = 0.0
            for c in range(d):
                diff = Xq[q, c] - Xtr[i, c]
                acc += diff * diff
            # insertion into a sorted top-k; strict < keeps earlier indices on ties
            if m < k:
                pos = m
                m += 1
            elif acc < best_d[k - 1]:
                pos = k - 1
            else:
                continue
            while pos > 0 and acc < best_d[pos - 1]:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = acc
            best_i[pos] = i
        s = 0.0
        for j in range(k):
            s += ytr[best_i[j]]
        out[q] = s / k
    return out


def _knn_np(Xtr, ytr, Xq, k, chunk=32):
    out = np.empty(len(Xq))
    for lo in range(0, len(Xq), chunk):
        diff = Xq[lo : lo + chunk, None, :] - Xtr[None, :, :]
        d2 = np.cumsum(diff * diff, axis=2)[:, :, -1]
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out[lo : lo + chunk] = np.cumsum(ytr[nn], axis=1)[:, -1] / k
    return out


def knn_predict(Xtr, ytr, Xq, k, accel=None):
    Xtr = np.ascontiguousarray(Xtr, dtype=np.float64)
    ytr = np.ascontiguousarray(ytr, dtype=np.float64)
    Xq = np.ascontiguousarray(Xq, dtype=np.float64)
    if Xtr.shape[1] == 0:
        Xtr = np.zeros((len(Xtr), 1))
        Xq = np.zeros((len(Xq), 1))
    if use_numba(accel):
        return _knn_nb(Xtr, ytr, Xq, int(k))
    return _knn_np(Xtr, ytr, Xq, int(k))
