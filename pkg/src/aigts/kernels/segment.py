"""Hot loops for exact weighted-entropy segmentation.

``cost_matrix`` fills C[i, j] = (j - i) / n * H(X[i:j]) for every segment and
``dp_table`` runs the suffix dynamic program over it. Both come in a numba
flavour and a vectorised numpy flavour; ``use_numba`` picks one.
"""

import numpy as np

from .._accel import njit, use_numba

# Candidates within this many nats of the optimum count as ties.
TIE_TOL = 1e-12


def prefix_sums(X):
    X = np.asarray(X, dtype=np.float64)
    P = np.zeros((X.shape[0] + 1, X.shape[1]), dtype=np.float64)
    np.cumsum(X, axis=0, out=P[1:])
    return P


def _xlogx_table(P):
    """v * log(v) for v = 0..max count, or None when counts are not integral."""
    top = P[-1].max() if len(P) else 0.0
    if not np.all(P == np.floor(P)):
        return None
    v = np.arange(int(top) + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)


@njit
def _cost_matrix_nb(P, L, integral):
    # H = log(T) - sum(s log s) / T, with s log s looked up for integer counts
    n = P.shape[0] - 1
    m = P.shape[1]
    C = np.full((n + 1, n + 1), np.inf)
    for i in range(n):
        for j in range(i + 1, n + 1):
            tot = 0.0
            acc = 0.0
            for c in range(m):
                s = P[j, c] - P[i, c]
                if s > 0.0:
                    tot += s
                    if integral:
                        acc += L[int(s + 0.5)]
                    else:
                        acc += s * np.log(s)
            h = 0.0
            if tot > 0.0:
                h = np.log(tot) - acc / tot
                if h < 0.0:
                    h = 0.0
            C[i, j] = (j - i) / n * h
    return C


def _cost_matrix_np(P):
    n = P.shape[0] - 1
    C = np.full((n + 1, n + 1), np.inf)
    for i in range(n):
        C[i, i + 1 :] = segment_cost_row(P, i, n)
    return C


def segment_cost_row(P, i, n_total):
    """Weighted cost of every segment [i, j) for j = i+1 .. len(P)-1."""
    S = P[i + 1 :] - P[i]
    pos = S > 0
    tot = np.where(pos, S, 0.0).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        acc = np.where(pos, S * np.log(np.where(pos, S, 1.0)), 0.0).sum(axis=1)
        h = np.log(tot) - acc / tot
    h = np.where(tot > 0, np.maximum(h, 0.0), 0.0)
    lengths = np.arange(1, S.shape[0] + 1, dtype=np.float64)
    return lengths / n_total * h


@njit
def _dp_table_nb(C, k_max):
    n = C.shape[0] - 1
    S = np.full((k_max + 1, n + 1), np.inf)
    for i in range(n):
        S[0, i] = C[i, n]
    for k in range(1, k_max + 1):
        for i in range(n):
            best = np.inf
            for j in range(i + 1, n):
                v = C[i, j] + S[k - 1, j]
                if v < best:
                    best = v
            S[k, i] = best
    return S


def _dp_table_np(C, k_max):
    n = C.shape[0] - 1
    S = np.full((k_max + 1, n + 1), np.inf)
    S[0, :n] = C[:n, n]
    inner = C[:n, :n]
    for k in range(1, k_max + 1):
        S[k, :n] = (inner + S[k - 1, :n][None, :]).min(axis=1)
    return S


def cost_matrix(X, accel=None):
    P = prefix_sums(X)
    if use_numba(accel):
        L = _xlogx_table(P)
        if L is None:
            return _cost_matrix_nb(P, np.zeros(1), False)
        return _cost_matrix_nb(P, L, True)
    return _cost_matrix_np(P)


def dp_table(C, k_max, accel=None):
    """Suffix table: S[k, i] = min cost of cutting [i, n) into k + 1 pieces."""
    if use_numba(accel):
        return _dp_table_nb(C, int(k_max))
    return _dp_table_np(C, int(k_max))


def reconstruct(C, S, k):
    """Lexicographically smallest cut list whose cost ties the optimum."""
    n = C.shape[0] - 1
    cuts = []
    i = 0
    for r in range(k, 0, -1):
        target = S[r, i]
        vals = C[i, i + 1 : n] + S[r - 1, i + 1 : n]
        j = i + 1 + int(np.argmax(vals <= target + TIE_TOL))
        cuts.append(j)
        i = j
    return cuts
