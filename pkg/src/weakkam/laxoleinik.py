"""Windowed min-plus engine: kernels, Lax-Oleinik operators, convolution powers."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from . import _kernels
from .errors import GridMismatch, InvalidDiscount, WindowTooSmall
from .grid import GridFunction, PeriodicGrid
from .models import MECHANICAL, AprioriBounds, DiscreteAction, estimate_bounds

RADIUS_SLACK = 1e-9


def lex_sort(offsets):
    offsets = np.asarray(offsets, dtype=np.int64).reshape(len(offsets), -1)
    order = np.lexsort(offsets.T[::-1])
    return np.ascontiguousarray(offsets[order]), order


def torus_representative(o, n):
    """Map integer offsets to the representative in (-n/2, n/2]."""
    o = np.mod(o, n)
    return np.where(2 * o > n, o - n, o)


def window_offsets(grid: PeriodicGrid, radius: float):
    """All torus-representative offsets o with |o| h <= radius, sorted."""
    n, d, h = grid.n, grid.dimension, grid.spacing
    w = int(np.floor(radius / h + RADIUS_SLACK))
    w = min(w, n // 2)
    axis = np.arange(-w, w + 1)
    axis = axis[(axis > -((n + 1) // 2)) & (axis <= n // 2)]
    cand = np.array(list(product(axis, repeat=d)), dtype=np.int64)
    norm = np.sqrt(np.sum((cand * h) ** 2, axis=1))
    cand = cand[norm <= radius * (1 + RADIUS_SLACK) + 1e-15]
    return lex_sort(cand)[0]


@dataclass(frozen=True, eq=False)
class ActionKernel:
    """Tabulated action on grid-node pairs inside a window.

    ``weights[i, k]`` is E(x_i, x_i + offsets[k] h); ``radius`` is the
    physical window radius (tau times the jump bound).
    """

    grid: PeriodicGrid
    tau: float
    radius: float
    offsets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.weights.shape != (self.grid.size, self.offsets.shape[0]):
            raise ValueError("weights must have shape (nodes, offsets)")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("kernel weights must be finite")

    @property
    def n_offsets(self):
        return self.offsets.shape[0]

    @cached_property
    def zero_index(self):
        hits = np.nonzero(~self.offsets.any(axis=1))[0]
        return int(hits[0]) if hits.size else -1

    @cached_property
    def pad(self):
        return int(np.abs(self.offsets).max(initial=0))

    @cached_property
    def _layout(self):
        g = self.grid
        W = self.pad
        pshape = (g.n + 2 * W,) * g.dimension
        pstride = np.array([int(np.prod(pshape[c + 1:])) for c in range(g.dimension)], dtype=np.int64)
        base = ((g.multi_index + W) @ pstride).astype(np.int64)
        foff = (self.offsets @ pstride).astype(np.int64)
        return pshape, base, foff

    @cached_property
    def pad_src(self):
        """Node index feeding each slot of the padded layout."""
        g = self.grid
        W = self.pad
        axis = (np.arange(-W, g.n + W) % g.n)
        mesh = np.meshgrid(*([axis] * g.dimension), indexing="ij")
        multi = np.stack([m.ravel() for m in mesh], axis=-1)
        return np.ascontiguousarray(g.flat_index(multi).astype(np.int64))

    def padded(self, values):
        return np.asarray(values, dtype=float).reshape(-1)[self.pad_src]

    def source_nodes(self, k):
        """Flat index of y - offsets[k] for every destination y (k per node or scalar)."""
        multi = self.grid.multi_index - self.offsets[np.asarray(k)]
        return self.grid.flat_index(multi)

    def target_nodes(self, k):
        multi = self.grid.multi_index + self.offsets[np.asarray(k)]
        return self.grid.flat_index(multi)

    @cached_property
    def incoming(self):
        """incoming[y, k] = weights[y - offsets[k], k]."""
        out = np.empty_like(self.weights)
        for k in range(self.n_offsets):
            out[:, k] = self.weights[self.source_nodes(k), k]
        return out

    def with_weights(self, weights):
        return ActionKernel(self.grid, self.tau, self.radius, self.offsets, weights)


@dataclass(frozen=True, eq=False)
class ArgminField:
    grid: PeriodicGrid
    best_offset: np.ndarray  # (N, d) integer offsets
    index: np.ndarray  # (N,) column into the kernel offsets

    def predecessors(self):
        return self.grid.flat_index(self.grid.multi_index - self.best_offset)

    def successors(self):
        return self.grid.flat_index(self.grid.multi_index + self.best_offset)


def _check_grid(u: GridFunction, kernel: ActionKernel):
    if u.grid != kernel.grid:
        raise GridMismatch(f"function grid {u.grid} does not match kernel grid {kernel.grid}")


def tabulate_kernel(action: DiscreteAction, grid: PeriodicGrid, bounds: AprioriBounds | None = None) -> ActionKernel:
    if grid.dimension != action.model.dimension:
        raise GridMismatch("grid and model dimensions differ")
    if bounds is None:
        bounds = estimate_bounds(action)
    radius = action.tau * bounds.window_radius
    if grid.spacing > radius * (1 + RADIUS_SLACK):
        raise WindowTooSmall(
            f"grid spacing {grid.spacing:.3g} exceeds the window radius {radius:.3g}; refine the grid or enlarge tau")
    offsets = window_offsets(grid, radius)
    return ActionKernel(grid, action.tau, radius, offsets, _tabulate(action, grid, offsets))


def _tabulate(action, grid, offsets):
    d = grid.dimension
    z = offsets * grid.spacing
    x = grid.coordinates
    m = action.model
    if m.kind == MECHANICAL:
        # separable: tau V(x) + kinetic(z) - P.z
        v = z / action.tau
        kin = action.tau * 0.5 * m.mass * np.sum(v * v, axis=1) - z @ action.p_vector
        pot = action.tau * m.potential_value(x if d > 1 else x[:, 0])
        return np.ascontiguousarray(pot[:, None] + kin[None, :])
    out = np.empty((grid.size, offsets.shape[0]))
    for k in range(offsets.shape[0]):
        zz = np.broadcast_to(z[k], x.shape)
        out[:, k] = action.from_displacement(x if d > 1 else x[:, 0], zz if d > 1 else zz[:, 0])
    return out


def _apply(u, kernel, beta):
    _check_grid(u, kernel)
    _, base, foff = kernel._layout
    out = np.empty(kernel.grid.size)
    arg = np.empty(kernel.grid.size, dtype=np.int64)
    _kernels.backward_apply(kernel.padded(u.values), kernel.incoming, base, foff, beta, out, arg)
    return out, arg


def _field(kernel, arg):
    return ArgminField(kernel.grid, kernel.offsets[arg], arg)


def backward_lax_oleinik(u: GridFunction, kernel: ActionKernel):
    out, arg = _apply(u, kernel, 1.0)
    return GridFunction(kernel.grid, out), _field(kernel, arg)


def forward_lax_oleinik(u: GridFunction, kernel: ActionKernel):
    _check_grid(u, kernel)
    _, base, foff = kernel._layout
    out = np.empty(kernel.grid.size)
    arg = np.empty(kernel.grid.size, dtype=np.int64)
    _kernels.forward_apply(kernel.padded(u.values), kernel.weights, base, foff, out, arg)
    return GridFunction(kernel.grid, out), _field(kernel, arg)


def discount_factor(tau, delta):
    td = tau * delta
    if not (0.0 < td < 1.0):
        raise InvalidDiscount(f"tau*delta = {td} must lie in (0, 1)")
    return 1.0 - td


def discounted_lax_oleinik(u: GridFunction, kernel: ActionKernel, delta: float):
    beta = discount_factor(kernel.tau, delta)
    out, arg = _apply(u, kernel, beta)
    return GridFunction(kernel.grid, out), _field(kernel, arg)


def identity_kernel(grid: PeriodicGrid, tau=0.0):
    return ActionKernel(grid, tau, 0.0, np.zeros((1, grid.dimension), dtype=np.int64), np.zeros((grid.size, 1)))


def min_plus_convolve(a: ActionKernel, b: ActionKernel) -> ActionKernel:
    """(a (x) b)(x, y) = min_z a(x, z) + b(z, y) over windowed intermediate nodes."""
    if a.grid != b.grid:
        raise GridMismatch("kernels live on different grids")
    g = a.grid
    n, d = g.n, g.dimension
    sums = torus_representative(a.offsets[:, None, :] + b.offsets[None, :, :], n)
    offsets, colmap = np.unique(sums.reshape(-1, d), axis=0, return_inverse=True)
    offsets, order = lex_sort(offsets)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    colmap = rank[colmap.reshape(-1)].reshape(a.n_offsets, b.n_offsets)
    targets = np.stack([a.target_nodes(k) for k in range(a.n_offsets)], axis=1)
    out = np.full((g.size, offsets.shape[0]), np.inf)
    _kernels.convolve_windows(a.weights, b.weights, np.ascontiguousarray(targets), colmap, out)
    radius = min(a.radius + b.radius, 0.5 * np.sqrt(d))
    return ActionKernel(g, a.tau + b.tau, radius, offsets, out)


def min_plus_power(action: DiscreteAction, grid: PeriodicGrid, N: int, safety=1.5) -> ActionKernel:
    """N-fold min-plus power of the kernel for step tau/N, by repeated squaring."""
    if N < 1 or (N & (N - 1)):
        raise ValueError("N must be a power of two")
    sub = DiscreteAction(action.model, action.tau / N, action.p)
    kernel = tabulate_kernel(sub, grid, estimate_bounds(sub, safety=safety))
    while N > 1:
        kernel = min_plus_convolve(kernel, kernel)
        N //= 2
    return kernel


def minimal_action_defect(action: DiscreteAction, grid: PeriodicGrid, N: int, radius: float, safety=1.5):
    """max |E^(N)(x, y) - E_tau(x, y)| over node pairs with |y - x| <= tau * radius.

    E^(N) is the N-fold min-plus power at step tau/N; both kernels live on
    ``grid``.  Pairs outside either window are skipped.
    """
    power = min_plus_power(action, grid, N, safety)
    direct = tabulate_kernel(action, grid, estimate_bounds(action, safety=safety))
    keep = np.sqrt(np.sum((direct.offsets * grid.spacing) ** 2, axis=1)) <= action.tau * radius * (1 + RADIUS_SLACK)
    cols = kernel_lookup(power, direct.offsets[keep])
    inside = cols >= 0
    diff = power.weights[:, cols[inside]] - direct.weights[:, np.nonzero(keep)[0][inside]]
    return float(np.max(np.abs(diff)))


def kernel_lookup(kernel: ActionKernel, offsets):
    """Columns of ``kernel`` matching the given offsets (-1 when absent)."""
    index = {tuple(o): k for k, o in enumerate(kernel.offsets.tolist())}
    return np.array([index.get(tuple(o), -1) for o in np.asarray(offsets).tolist()], dtype=np.int64)


def dump_kernel_csv(kernel: ActionKernel, directory):
    """Write one GridFunction CSV per offset (debugging aid)."""
    import os

    from .grid import to_csv

    os.makedirs(directory, exist_ok=True)
    for k, o in enumerate(kernel.offsets):
        name = "offset_" + "_".join(str(int(c)) for c in o) + ".csv"
        to_csv(GridFunction(kernel.grid, kernel.weights[:, k]), os.path.join(directory, name))
