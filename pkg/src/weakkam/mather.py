"""Mañé potentials, minimizing measures, calibrated chains and the dual selection formula."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import ChainTooShort, NegativeCycle, SolverError
from .grid import GridFunction, PeriodicGrid
from .laxoleinik import ActionKernel, ArgminField, kernel_lookup, torus_representative
from .solvers import effective_action_karp


@dataclass(frozen=True, eq=False)
class HolonomicMeasure:
    """Nonnegative weights on windowed edges (node, node + offset)."""

    grid: PeriodicGrid
    nodes: np.ndarray
    offsets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64).reshape(-1)
        offsets = np.asarray(self.offsets, dtype=np.int64).reshape(nodes.size, self.grid.dimension)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if np.any(weights < 0):
            raise ValueError("measure weights must be nonnegative")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "weights", weights)

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def targets(self):
        return self.grid.flat_index(self.grid.multi_index[self.nodes] + self.offsets)

    def source_marginal(self):
        return np.bincount(self.nodes, weights=self.weights, minlength=self.grid.size)

    def target_marginal(self):
        return np.bincount(self.targets(), weights=self.weights, minlength=self.grid.size)

    marginal = source_marginal

    def holonomy_residual(self):
        return float(np.max(np.abs(self.source_marginal() - self.target_marginal())))

    def is_holonomic(self, tol=1e-10):
        return abs(self.total_mass - 1.0) <= 1e-12 and self.holonomy_residual() <= tol

    def action(self, kernel: ActionKernel):
        cols = kernel_lookup(kernel, self.offsets)
        if np.any(cols < 0):
            raise ValueError("measure charges an edge outside the kernel window")
        return float(np.sum(self.weights * kernel.weights[self.nodes, cols]))

    def support(self):
        return np.unique(self.nodes[self.weights > 0])

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write("node_index,offset,weight\n")
        for node, off, w in zip(self.nodes, self.offsets, self.weights):
            buf.write(f"{int(node)},{';'.join(str(int(c)) for c in off)},{w:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


@dataclass
class CalibratedChain:
    """Backward chain x_0, x_{-1}, ..., x_{-K}.

    ``positions`` are unwrapped coordinates in R^d so that consecutive
    differences are the true increments; ``defects[k]`` belongs to the
    step x_{-k-1} -> x_{-k}.
    """

    nodes: np.ndarray
    positions: np.ndarray
    offsets: np.ndarray
    defects: np.ndarray
    grid: PeriodicGrid
    tau_delta: float | None = None

    @property
    def length(self):
        return len(self.nodes) - 1

    def increments(self):
        """Forward increments x_{-k} - x_{-k-1}, k = 0..K-1."""
        return self.positions[:-1] - self.positions[1:]

    def forward_positions(self):
        """Positions in forward time order x_{-K}, ..., x_0."""
        return self.positions[::-1]


def mane_potential(kernel: ActionKernel, effective_action: float, source: int, return_details=False,
                   negative_tol: float = 1e-9):
    """Phi(source, .) by Jacobi Bellman-Ford on reduced weights E - Ebar.

    Phi(source, source) is the cheapest return chain with at least one
    step, floored at 0.  Raises NegativeCycle when the reduced weights
    admit a cycle below -negative_tol.
    """
    N = kernel.grid.size
    _, base, foff = kernel._layout
    inc = kernel.incoming
    cur = np.full(N, np.inf)
    cur[source] = 0.0
    out = np.empty(N)
    thresh = 1e-12 * (1.0 + abs(effective_action))
    sweeps = 0
    change = np.inf
    while sweeps < N + 2:
        change = _kernels.relax_sweep(kernel.padded(cur), inc, base, foff, effective_action, cur, out)
        cur, out = out, cur
        sweeps += 1
        if change <= thresh:
            break
    if change > thresh:
        raise NegativeCycle(f"reduced potential still decreasing by {change:.3e} after {sweeps} sweeps; "
                            "the supplied effective action is above the minimum cycle mean")
    if cur[source] < -negative_tol:
        raise NegativeCycle(f"reduced return cost {cur[source]:.3e} at node {source} is negative")
    ret = _return_cost(kernel, cur, source, effective_action)
    if ret < -negative_tol:
        raise NegativeCycle(f"reduced return cost {ret:.3e} at node {source} is negative")
    phi = cur.copy()
    phi[source] = max(ret, 0.0)
    if not np.all(np.isfinite(phi)):
        raise SolverError("Mañé potential is infinite somewhere: the window graph is not strongly connected")
    result = GridFunction(kernel.grid, phi)
    if return_details:
        return result, {"sweeps": sweeps, "return_cost": ret, "with_trivial_chain": 0.0}
    return result


def _return_cost(kernel, phi, source, effective_action):
    """min over offsets of phi(source - o) + E(source - o, source) - Ebar."""
    srcs = np.array([kernel.source_nodes(k)[source] for k in range(kernel.n_offsets)])
    return float(np.min(phi[srcs] + kernel.incoming[source] - effective_action))


def mane_return_cost(kernel: ActionKernel, effective_action: float, source: int) -> float:
    _, info = mane_potential(kernel, effective_action, source, return_details=True)
    return info["return_cost"]


def cycle_measure(kernel: ActionKernel, cycle) -> HolonomicMeasure:
    """Uniform edge measure on a closed cycle of grid nodes (forward order)."""
    g = kernel.grid
    cyc = np.asarray(cycle, dtype=np.int64)
    nxt = np.roll(cyc, -1)
    offsets = torus_representative(g.multi_index[nxt] - g.multi_index[cyc], g.n)
    w = np.full(cyc.size, 1.0 / cyc.size)
    return HolonomicMeasure(g, cyc, offsets, w)


def minimizing_measure(kernel: ActionKernel) -> HolonomicMeasure:
    """Uniform measure on a minimum-mean cycle (an extreme minimizer)."""
    _, cycle = effective_action_karp(kernel)
    return cycle_measure(kernel, cycle)


def minimizing_measure_lp(kernel: ActionKernel):
    """Minimum of sum w E over all holonomic edge measures, by linear programming.

    Intended as an exhaustive check on tiny grids.  Returns (value, measure).
    """
    N, K = kernel.weights.shape
    if N > 4096:
        raise ValueError("the LP check is meant for small grids")
    c = kernel.weights.ravel()
    rows, cols, vals = [], [], []
    tgt = np.stack([kernel.target_nodes(k) for k in range(K)], axis=1)
    for i in range(N):
        for k in range(K):
            e = i * K + k
            rows += [i, tgt[i, k]]
            cols += [e, e]
            vals += [1.0, -1.0]
    A = csr_matrix((vals, (rows, cols)), shape=(N, N * K)).toarray()
    A = np.vstack([A, np.ones((1, N * K))])
    b = np.zeros(N + 1)
    b[-1] = 1.0
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverError(f"holonomic LP failed: {res.message}")
    w = np.clip(res.x, 0.0, None)
    keep = w > 1e-14
    idx = np.nonzero(keep)[0]
    nodes, cols_ = idx // K, idx % K
    return float(res.fun), HolonomicMeasure(kernel.grid, nodes, kernel.offsets[cols_], w[keep] / w[keep].sum())


def mather_set(kernel: ActionKernel, tolerance: float, effective_action=None):
    """Nodes on cycles whose reduced edges are all within ``tolerance``.

    Reduced weights are taken relative to the sub-action Phi(s, .) with s
    on a minimum-mean cycle, so every cycle inside the tight subgraph has
    mean within ``tolerance`` of the effective action.  The set grows with
    the tolerance and contains the support of the Karp minimizing measure.
    """
    rep, cycle = effective_action_karp(kernel)
    ebar = rep.effective_action if effective_action is None else effective_action
    phi = mane_potential(kernel, ebar, int(cycle[0])).values
    N, K = kernel.weights.shape
    tgt = np.stack([kernel.target_nodes(k) for k in range(K)], axis=1)
    reduced = kernel.weights - ebar + phi[:, None] - phi[tgt]
    tight = reduced <= tolerance + 1e-12 * (1.0 + abs(ebar))
    rows = np.repeat(np.arange(N), K)[tight.ravel()]
    cols = tgt.ravel()[tight.ravel()]
    graph = csr_matrix((np.ones(rows.size), (rows, cols)), shape=(N, N))
    _, labels = connected_components(graph, directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=labels.max() + 1)
    in_set = sizes[labels] > 1
    z = kernel.zero_index
    if z >= 0:
        in_set |= tight[:, z]
    return np.nonzero(in_set)[0]


def extract_calibrated_chain(u: GridFunction, argmin: ArgminField, start: int, K: int, kernel: ActionKernel,
                             effective_action: float = 0.0, tau_delta: float | None = None) -> CalibratedChain:
    """Follow the argmin field K steps backward from ``start``."""
    g = u.grid
    pred = argmin.predecessors()
    nodes = [int(start)]
    pos = [g.coordinates[start].astype(float)]
    offs, defects = [], []
    beta = 1.0 if tau_delta is None else 1.0 - tau_delta
    for _ in range(K):
        y = nodes[-1]
        col = int(argmin.index[y])
        o = kernel.offsets[col]
        x = int(pred[y])
        e = kernel.weights[x, col]
        if tau_delta is None:
            defects.append(e - (u.values[y] - u.values[x]) - effective_action)
        else:
            defects.append(e + beta * u.values[x] - u.values[y])
        offs.append(o)
        nodes.append(x)
        pos.append(pos[-1] - o * g.spacing)
    return CalibratedChain(np.array(nodes), np.array(pos), np.array(offs, dtype=np.int64).reshape(K, g.dimension),
                           np.array(defects), g, tau_delta)


def discounted_occupation_measure(chain: CalibratedChain, tau_delta: float, truncation: float = 1e-12):
    """Edge weights tau_delta (1 - tau_delta)^k along the chain, renormalized.

    Returns (measure, holonomy residual).
    """
    K = chain.length
    decay = 1.0 - tau_delta
    if decay**K > truncation:
        need = int(np.ceil(np.log(truncation) / np.log(decay)))
        raise ChainTooShort(f"chain of length {K} leaves tail mass {decay**K:.2e}; need at least {need} steps")
    w = tau_delta * decay ** np.arange(K)
    w = w / w.sum()
    src = chain.nodes[1:]
    offs = chain.offsets
    # merge repeated edges
    key = np.concatenate([src[:, None], offs], axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    weights = np.bincount(inv.reshape(-1), weights=w, minlength=uniq.shape[0])
    mu = HolonomicMeasure(chain.grid, uniq[:, 0], uniq[:, 1:], weights)
    return mu, mu.holonomy_residual()


def selected_solution_dual(kernel: ActionKernel, effective_action: float, measures) -> GridFunction:
    """y -> min over measures of sum_x marginal(x) Phi(x, y)."""
    cache = {}
    best = None
    for mu in measures:
        marg = mu.source_marginal()
        acc = np.zeros(kernel.grid.size)
        for x in np.nonzero(marg > 0)[0]:
            if x not in cache:
                cache[x] = mane_potential(kernel, effective_action, int(x)).values
            acc += marg[x] * cache[x]
        best = acc if best is None else np.minimum(best, acc)
    if best is None:
        raise ValueError("at least one measure is required")
    return GridFunction(kernel.grid, best)
