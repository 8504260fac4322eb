"""Compiled inner loops.

Every operator works on a periodically padded copy of the input stored
flat: destination node ``y`` sits at ``base[y]`` in the padded array and
its predecessor along offset ``k`` at ``base[y] - foff[k]``.  Offsets are
sorted lexicographically by the caller, so keeping the first strict
improvement implements the lexicographic tie-break.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True, inline="always")
def _row_min_contiguous(seg, start, row, beta):
    # four independent accumulators break the dependency chain of the min
    K = row.shape[0]
    b0 = np.inf
    b1 = np.inf
    b2 = np.inf
    b3 = np.inf
    k = 0
    while k + 4 <= K:
        v0 = beta * seg[start + k] + row[k]
        v1 = beta * seg[start + k + 1] + row[k + 1]
        v2 = beta * seg[start + k + 2] + row[k + 2]
        v3 = beta * seg[start + k + 3] + row[k + 3]
        b0 = v0 if v0 < b0 else b0
        b1 = v1 if v1 < b1 else b1
        b2 = v2 if v2 < b2 else b2
        b3 = v3 if v3 < b3 else b3
        k += 4
    while k < K:
        v0 = beta * seg[start + k] + row[k]
        b0 = v0 if v0 < b0 else b0
        k += 1
    return min(min(b0, b1), min(b2, b3))


@njit(cache=True, nogil=True, inline="always")
def _row_min_gather(upad, b, foff, row, beta):
    K = row.shape[0]
    b0 = np.inf
    b1 = np.inf
    b2 = np.inf
    b3 = np.inf
    k = 0
    while k + 4 <= K:
        v0 = beta * upad[b - foff[k]] + row[k]
        v1 = beta * upad[b - foff[k + 1]] + row[k + 1]
        v2 = beta * upad[b - foff[k + 2]] + row[k + 2]
        v3 = beta * upad[b - foff[k + 3]] + row[k + 3]
        b0 = v0 if v0 < b0 else b0
        b1 = v1 if v1 < b1 else b1
        b2 = v2 if v2 < b2 else b2
        b3 = v3 if v3 < b3 else b3
        k += 4
    while k < K:
        v0 = beta * upad[b - foff[k]] + row[k]
        b0 = v0 if v0 < b0 else b0
        k += 1
    return min(min(b0, b1), min(b2, b3))


@njit(cache=True, nogil=True)
def backward_apply(upad, incoming, base, foff, beta, out, arg):
    n, K = incoming.shape
    for y in range(n):
        b = base[y]
        row = incoming[y]
        best = _row_min_gather(upad, b, foff, row, beta)
        # first offset attaining the minimum (offsets are lexicographically sorted)
        bk = 0
        for k in range(K):
            if beta * upad[b - foff[k]] + row[k] == best:
                bk = k
                break
        out[y] = best
        arg[y] = bk


@njit(cache=True, nogil=True)
def relax_sweep(vpad, incoming, base, foff, shift, cur, out):
    """One Jacobi Bellman-Ford sweep; returns the largest decrease."""
    n = incoming.shape[0]
    change = 0.0
    for y in range(n):
        best = _row_min_gather(vpad, base[y], foff, incoming[y], 1.0) - shift
        if best < cur[y]:
            d = cur[y] - best
            if d > change or d != d:
                change = d
            out[y] = best
        else:
            out[y] = cur[y]
    return change


@njit(cache=True, nogil=True)
def fixed_point_iterate(u, incoming, base, foff, pad_src, beta, shift, tol, max_iter):
    """Iterate u <- min_k beta u(y - o_k) + incoming[y, k] - shift.

    Stops once the sup-norm update is <= tol.  Returns (u, iterations,
    last update norm).  When the flat offsets are consecutive (d = 1) the
    padded input is stored reversed so each row minimum is a contiguous
    scan.
    """
    n, K = incoming.shape
    P = pad_src.shape[0]
    contiguous = True
    for k in range(1, K):
        if foff[k] != foff[0] + k:
            contiguous = False
            break
    upad = np.empty(P)
    cur = u.copy()
    new = np.empty(n)
    res = np.inf
    it = 0
    while it < max_iter:
        it += 1
        if contiguous:
            for p in range(P):
                upad[P - 1 - p] = cur[pad_src[p]]
        else:
            for p in range(P):
                upad[p] = cur[pad_src[p]]
        res = 0.0
        for y in range(n):
            if contiguous:
                best = _row_min_contiguous(upad, P - 1 - (base[y] - foff[0]), incoming[y], beta)
            else:
                best = _row_min_gather(upad, base[y], foff, incoming[y], beta)
            best -= shift
            d = abs(best - cur[y])
            if d > res:
                res = d
            new[y] = best
        cur, new = new, cur
        if res <= tol:
            break
    return cur, it, res


@njit(cache=True, nogil=True)
def forward_apply(upad, weights, base, foff, out, arg):
    n, K = weights.shape
    for x in range(n):
        b = base[x]
        best = -np.inf
        bk = 0
        for k in range(K):
            val = upad[b + foff[k]] - weights[x, k]
            if val > best:
                best = val
                bk = k
        out[x] = best
        arg[x] = bk


@njit(cache=True, nogil=True)
def pred_graph_best_cycle(pred, edge_w):
    """Minimum-mean cycle of the functional graph y -> pred[y].

    Returns (mean, start node); start is -1 when no cycle exists.
    """
    n = pred.shape[0]
    state = np.zeros(n, np.int64)  # 0 new, 1 on current path, 2 done
    stamp = np.full(n, -1, np.int64)
    best = np.inf
    best_start = -1
    for s in range(n):
        if state[s] != 0:
            continue
        v = s
        while state[v] == 0:
            state[v] = 1
            stamp[v] = s
            v = pred[v]
        if state[v] == 1 and stamp[v] == s:
            total = 0.0
            length = 0
            w = v
            start = v
            while True:
                total += edge_w[w]
                length += 1
                if w < start:
                    start = w
                w = pred[w]
                if w == v:
                    break
            mean = total / length
            if mean < best or (mean == best and start < best_start):
                best = mean
                best_start = start
        v = s
        while state[v] == 1:
            state[v] = 2
            v = pred[v]
    return best, best_start


@njit(cache=True, nogil=True)
def karp_running_max(dn, dk, n_total, k, runmax):
    for v in range(dn.shape[0]):
        val = (dn[v] - dk[v]) / (n_total - k)
        if val > runmax[v]:
            runmax[v] = val


@njit(cache=True, nogil=True)
def convolve_windows(wa, wb, targets, colmap, out):
    """out[i, colmap[a, b]] = min of wa[i, a] + wb[targets[i, a], b]."""
    N, Ka = wa.shape
    Kb = wb.shape[1]
    for i in range(N):
        for a in range(Ka):
            j = targets[i, a]
            c = wa[i, a]
            for b in range(Kb):
                val = c + wb[j, b]
                m = colmap[a, b]
                if val < out[i, m]:
                    out[i, m] = val
