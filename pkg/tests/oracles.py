"""Brute-force references on tiny grids, written without the package's kernels."""
from itertools import product

import numpy as np

from weakkam.models import eval_discrete_action


def rep(k, n):
    k %= n
    return k - n if 2 * k > n else k


def dense_action(action, grid):
    """A[i, j] = E(x_i, x_i + rep(j - i) h), scalar evaluation per pair (d = 1)."""
    n, h = grid.n, grid.spacing
    A = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            x = i * h
            A[i, j] = eval_discrete_action(action, x, x + rep(j - i, n) * h)
    return A


def brute_backward(u, A, beta=1.0):
    n = len(u)
    return np.array([min(beta * u[i] + A[i, j] for i in range(n)) for j in range(n)])


def brute_forward(u, A):
    n = len(u)
    return np.array([max(u[j] - A[i, j] for j in range(n)) for i in range(n)])


def brute_discounted_series(A, beta, depth):
    """min over backward chains of depth ``depth`` of sum beta^k A(x_{-k-1}, x_{-k}), by DP."""
    n = A.shape[0]
    V = np.zeros(n)
    for _ in range(depth):
        V = np.array([min(beta * V[i] + A[i, j] for i in range(n)) for j in range(n)])
    return V


def simple_cycles(n):
    """All simple cycles of the complete digraph with self-loops, as node tuples."""
    out = []
    for k in range(1, n + 1):
        for seq in product(range(n), repeat=k):
            if seq[0] == min(seq) and len(set(seq)) == k:
                out.append(seq)
    return out


def brute_min_cycle_mean(A):
    best = np.inf
    for cyc in simple_cycles(A.shape[0]):
        s = sum(A[cyc[i], cyc[(i + 1) % len(cyc)]] for i in range(len(cyc)))
        best = min(best, s / len(cyc))
    return best


def brute_mane(A, ebar, source, max_len):
    """min over chains source -> y of at most max_len steps of sum (A - ebar), by enumeration.

    Only chains whose interior nodes are distinct are enumerated: with ebar
    the minimum cycle mean every closed loop has nonnegative reduced cost,
    so removing it never increases a chain's cost.
    """
    n = A.shape[0]
    R = A - ebar
    best = np.full(n, np.inf)

    def extend(last, cost, visited, steps):
        np.minimum(best, cost + R[last], out=best)
        if steps + 1 >= max_len:
            return
        for nxt in range(n):
            if nxt not in visited:
                visited.add(nxt)
                extend(nxt, cost + R[last, nxt], visited, steps + 1)
                visited.remove(nxt)

    extend(source, 0.0, {source}, 0)
    return best


def brute_convolve(A, B):
    n = A.shape[0]
    return np.array([[min(A[x, z] + B[z, y] for z in range(n)) for y in range(n)] for x in range(n)])
