"""CART regression-tree growth and traversal.

Features are pre-binned to their sorted distinct training values, so a node's
split search is a histogram scan rather than a sort. Thresholds are still the
midpoints of consecutive distinct values present in the node, i.e. exact
CART. Per-node feature subsets come from a splitmix64 stream so the numba and
numpy builders grow bit-identical trees from the same seed.
"""

import numpy as np

from .._accel import njit, use_numba

_MASK = 0xFFFFFFFFFFFFFFFF
_GAIN_RTOL = 1e-10
# split scores this close to the best count as ties and go to the first candidate
_TIE_RTOL = 1e-12


def bin_features(X):
    """Map each column to codes into its sorted distinct values.

    Returns ``(codes, edges, nbins)`` where ``edges[f, :nbins[f]]`` holds the
    distinct values of column ``f``.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    uniq = [np.unique(X[:, f]) for f in range(d)]
    nbins = np.array([len(u) for u in uniq], dtype=np.int64)
    width = max(int(nbins.max()) if d else 1, 1)
    edges = np.zeros((d, width), dtype=np.float64)
    codes = np.empty((n, d), dtype=np.int64)
    for f, u in enumerate(uniq):
        edges[f, : len(u)] = u
        codes[:, f] = np.searchsorted(u, X[:, f])
    return codes, edges, nbins


def _midpoint(a, b):
    t = a + (b - a) / 2.0
    if t >= b:
        t = a
    return t


# -- numba builder -----------------------------------------------------------


@njit
def _splitmix_nb(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit
def _grow_nb(codes, edges, nbins, y, w, max_depth, min_leaf, max_features, seed):
    n, d = codes.shape
    idx_list = []
    for r in range(n):
        if w[r] > 0.0:
            idx_list.append(r)
    m = len(idx_list)
    idx = np.empty(m, dtype=np.int64)
    for t in range(m):
        idx[t] = idx_list[t]
    buf = np.empty(m, dtype=np.int64)

    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    weight = np.zeros(cap)
    gain = np.zeros(cap)

    max_nb = edges.shape[1]
    hw = np.zeros(max_nb)
    hs = np.zeros(max_nb)
    cand_p = np.empty(d * max_nb)
    cand_f = np.empty(d * max_nb, dtype=np.int64)
    cand_lo = np.empty(d * max_nb, dtype=np.int64)
    cand_hi = np.empty(d * max_nb, dtype=np.int64)
    perm = np.arange(d)
    state = np.uint64(seed)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_lo = np.empty(cap, dtype=np.int64)
    stack_hi = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    sp = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = m
    stack_depth[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]

        W = 0.0
        SY = 0.0
        ymin = np.inf
        ymax = -np.inf
        for t in range(lo, hi):
            r = idx[t]
            W += w[r]
            SY += w[r] * y[r]
            if y[r] < ymin:
                ymin = y[r]
            if y[r] > ymax:
                ymax = y[r]
        mean = SY / W
        value[node] = mean
        weight[node] = W
        if max_depth >= 0 and depth >= max_depth:
            continue
        if W < 2.0 * min_leaf or ymin == ymax:
            continue
        sse = 0.0
        for t in range(lo, hi):
            r = idx[t]
            sse += w[r] * (y[r] - mean) * (y[r] - mean)

        if max_features < d:
            for t in range(d):
                perm[t] = t
            for t in range(max_features):
                state, z = _splitmix_nb(state)
                j = t + np.int64(z % np.uint64(d - t))
                tmp = perm[t]
                perm[t] = perm[j]
                perm[j] = tmp
            chosen = np.sort(perm[:max_features])
        else:
            chosen = np.arange(d)

        ncand = 0
        for f in chosen:
            nb = nbins[f]
            for b in range(nb):
                hw[b] = 0.0
                hs[b] = 0.0
            for t in range(lo, hi):
                r = idx[t]
                c = codes[r, f]
                hw[c] += w[r]
                hs[c] += w[r] * y[r]
            tw = 0.0
            ts = 0.0
            for b in range(nb):
                tw += hw[b]
                ts += hs[b]
            cw = 0.0
            cs = 0.0
            prev = -1
            for b in range(nb):
                if hw[b] > 0.0:
                    if prev >= 0:
                        wl = cw
                        wr = tw - cw
                        if wl >= min_leaf and wr >= min_leaf:
                            sl = cs
                            sr = ts - cs
                            cand_p[ncand] = sl * sl / wl + sr * sr / wr
                            cand_f[ncand] = f
                            cand_lo[ncand] = prev
                            cand_hi[ncand] = b
                            ncand += 1
                    cw += hw[b]
                    cs += hs[b]
                    prev = b

        if ncand == 0:
            continue
        top = -np.inf
        for c in range(ncand):
            if cand_p[c] > top:
                top = cand_p[c]
        pick = 0
        while cand_p[pick] < top - _TIE_RTOL * abs(top):
            pick += 1
        best = cand_p[pick]
        best_f = cand_f[pick]
        best_bin = cand_lo[pick]
        best_thr = _midpoint_nb(edges[best_f, best_bin], edges[best_f, cand_hi[pick]])
        g = best - SY * SY / W
        if not g > _GAIN_RTOL * sse:
            continue

        nl = 0
        nr = 0
        for t in range(lo, hi):
            r = idx[t]
            if codes[r, best_f] <= best_bin:
                idx[lo + nl] = r
                nl += 1
            else:
                buf[nr] = r
                nr += 1
        for t in range(nr):
            idx[lo + nl + t] = buf[t]

        feature[node] = best_f
        threshold[node] = best_thr
        gain[node] = g
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack_node[sp] = rid
        stack_lo[sp] = lo + nl
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = lid
        stack_lo[sp] = lo
        stack_hi[sp] = lo + nl
        stack_depth[sp] = depth + 1
        sp += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        weight[:n_nodes],
        gain[:n_nodes],
    )


@njit
def _midpoint_nb(a, b):
    t = a + (b - a) / 2.0
    if t >= b:
        t = a
    return t


@njit
def _predict_nb(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while left[node] != -1:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


# -- numpy builder -----------------------------------------------------------


def _splitmix_py(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _seqsum(a):
    # np.sum is pairwise; the numba builder accumulates sequentially.
    return float(np.cumsum(a)[-1]) if len(a) else 0.0


def _grow_np(codes, edges, nbins, y, w, max_depth, min_leaf, max_features, seed):
    n, d = codes.shape
    idx = np.flatnonzero(w > 0.0)
    wy = w * y
    feature, threshold, left, right, value, weight, gain = [], [], [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        weight.append(0.0)
        gain.append(0.0)
        return len(feature) - 1

    state = int(seed) & _MASK
    root = new_node()
    stack = [(root, 0, len(idx), 0)]
    while stack:
        node, lo, hi, depth = stack.pop()
        seg = idx[lo:hi]
        ws = w[seg]
        W = _seqsum(ws)
        SY = _seqsum(wy[seg])
        mean = SY / W
        value[node] = mean
        weight[node] = W
        if max_depth >= 0 and depth >= max_depth:
            continue
        ys = y[seg]
        if W < 2.0 * min_leaf or ys.min() == ys.max():
            continue
        sse = _seqsum(ws * (ys - mean) * (ys - mean))

        if max_features < d:
            perm = list(range(d))
            for t in range(max_features):
                state, z = _splitmix_py(state)
                j = t + z % (d - t)
                perm[t], perm[j] = perm[j], perm[t]
            chosen = sorted(perm[:max_features])
        else:
            chosen = range(d)

        cands = []
        for f in chosen:
            nb = int(nbins[f])
            cf = codes[seg, f]
            hw = np.bincount(cf, weights=ws, minlength=nb)
            hs = np.bincount(cf, weights=wy[seg], minlength=nb)
            tw = _seqsum(hw)
            ts = _seqsum(hs)
            ne = np.flatnonzero(hw > 0.0)
            if len(ne) < 2:
                continue
            # cumulative sums over all bins to mirror the sequential scan
            cw = np.cumsum(hw)[ne[:-1]]
            cs = np.cumsum(hs)[ne[:-1]]
            wl, wr = cw, tw - cw
            sl, sr = cs, ts - cs
            ok = (wl >= min_leaf) & (wr >= min_leaf)
            if not ok.any():
                continue
            k = np.flatnonzero(ok)
            proxy = sl[k] * sl[k] / wl[k] + sr[k] * sr[k] / wr[k]
            cands.append((proxy, f, ne[k], ne[k + 1]))

        if not cands:
            continue
        all_p = np.concatenate([c[0] for c in cands])
        top = all_p.max()
        pick = int(np.argmax(all_p >= top - _TIE_RTOL * abs(top)))
        for proxy, f, lo_b, hi_b in cands:
            if pick < len(proxy):
                break
            pick -= len(proxy)
        best, best_f, best_bin = float(proxy[pick]), f, int(lo_b[pick])
        best_thr = _midpoint(edges[f, lo_b[pick]], edges[f, hi_b[pick]])
        g = best - SY * SY / W
        if not g > _GAIN_RTOL * sse:
            continue
        mask = codes[seg, best_f] <= best_bin
        nl = int(mask.sum())
        idx[lo:hi] = np.concatenate([seg[mask], seg[~mask]])

        feature[node] = best_f
        threshold[node] = best_thr
        gain[node] = g
        lid, rid = new_node(), new_node()
        left[node], right[node] = lid, rid
        stack.append((rid, lo + nl, hi, depth + 1))
        stack.append((lid, lo, lo + nl, depth + 1))

    return (
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
        np.array(weight, dtype=np.float64),
        np.array(gain, dtype=np.float64),
    )


def _predict_np(X, feature, threshold, left, right, value):
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = left[node] != -1
    while active.any():
        r = rows[active]
        nd = node[active]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = left[node] != -1
    return value[node]


# -- dispatch ----------------------------------------------------------------


def grow_tree(binned, y, w, max_depth, min_leaf, max_features, seed, accel=None):
    """Grow one tree; returns the node arrays
    ``(feature, threshold, left, right, value, weight, gain)``."""
    codes, edges, nbins = binned
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    max_depth = -1 if max_depth is None else int(max_depth)
    args = (codes, edges, nbins, y, w, max_depth, float(min_leaf), int(max_features))
    if use_numba(accel):
        return _grow_nb(*args, np.uint64(int(seed) & _MASK))
    return _grow_np(*args, int(seed) & _MASK)


def predict_tree(X, feature, threshold, left, right, value, accel=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if use_numba(accel):
        return _predict_nb(X, feature, threshold, left, right, value)
    return _predict_np(X, feature, threshold, left, right, value)
