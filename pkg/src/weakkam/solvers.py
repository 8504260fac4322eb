"""Fixed-point and eigenvalue solvers for the discrete Lax-Oleinik equations.

Three independent routes to the effective action are provided:

* ``karp``: exact minimum cycle mean of the windowed grid graph,
* ``discounted-limit``: tau*delta*u_{tau,delta} as delta -> 0,
* ``mean-per-site``: growth rate of the iterates T^k[0].

The weak KAM solution is obtained through the vanishing-discount limit
of u_{tau,delta} - E/(tau delta) and then polished by undiscounted
iteration.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import DisconnectedGraph, MaxIterExceeded, ScheduleExhausted, SolverError
from .grid import GridFunction, PeriodicGrid, discrete_lipschitz, normalize_min_zero, resample, sup_norm_diff
from .laxoleinik import ActionKernel, backward_lax_oleinik, discount_factor, tabulate_kernel
from .models import DiscreteAction, estimate_bounds
from .rates import RateFit, fit_rate

ROUTES = ("karp", "discounted-limit", "mean-per-site")
CSV_FIELDS = ("route", "tau", "delta", "n", "effective_action", "normalized_effective",
              "iterations", "final_residual", "wall_time")


def default_schedule(start=0.4, count=8):
    return [start * 2.0**-k for k in range(count)]


@dataclass
class SolveReport:
    effective_action: float
    normalized_effective: float
    iterations: int
    final_residual: float
    route: str
    wall_time: float
    tau: float = float("nan")
    delta: float = float("nan")
    n: int = 0
    extras: dict = field(default_factory=dict)

    def csv_row(self):
        vals = [self.route, self.tau, self.delta, self.n, self.effective_action, self.normalized_effective,
                self.iterations, self.final_residual, self.wall_time]
        return ",".join(v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else f"{v:.17g}")
                        for v in vals)


@dataclass
class WeakKamSolution:
    u: GridFunction
    effective_action: float
    calibration_defect: GridFunction
    report: Optional[SolveReport] = None
    cauchy_gaps: list = field(default_factory=list)


def _report(kernel, route, value, iterations, residual, t0, delta=float("nan"), **extras):
    return SolveReport(value, value / kernel.tau, int(iterations), float(residual), route,
                       time.perf_counter() - t0, kernel.tau, delta, kernel.grid.n, extras)


def _iterate(kernel, u0, beta, shift, tol, max_iter):
    _, base, foff = kernel._layout
    u, it, res = _kernels.fixed_point_iterate(np.ascontiguousarray(u0, dtype=float), kernel.incoming, base, foff,
                                              kernel.pad_src, beta, shift, tol, max_iter)
    return u, int(it), float(res)


def solve_discounted(kernel: ActionKernel, delta: float, tol: float = 1e-9, max_iter: Optional[int] = None,
                     u0=None):
    """Banach iteration for the discounted equation.

    Stops when the update is <= tol * tau * delta, which bounds the
    distance to the fixed point by tol.  ``u0`` defaults to zero; a warm
    start changes only the iteration count.
    """
    t0 = time.perf_counter()
    beta = discount_factor(kernel.tau, delta)
    td = kernel.tau * delta
    if tol <= 0:
        raise ValueError("tol must be positive")
    start = np.zeros(kernel.grid.size) if u0 is None else np.asarray(getattr(u0, "values", u0), dtype=float)
    if max_iter is None:
        scale = max(1.0, float(np.abs(kernel.weights).max()) / td)
        max_iter = int(np.ceil(np.log(scale / (tol * td)) / -np.log(beta))) + 100
    u, it, res = _iterate(kernel, start, beta, 0.0, tol * td, max_iter)
    if res > tol * td:
        raise MaxIterExceeded(f"discounted iteration stalled at residual {res:.3e} after {it} sweeps",
                              residual=res, iterations=it)
    value = float(np.mean(td * u))
    rep = _report(kernel, "discounted-limit", value, it, res, t0, delta,
                  spread=float(td * (u.max() - u.min())))
    return GridFunction(kernel.grid, u), rep


def _strongly_connected(kernel):
    unit = set()
    for o in kernel.offsets.tolist():
        if sum(abs(c) for c in o) == 1:
            unit.add(tuple(o))
    d = kernel.grid.dimension
    if len(unit) == 2 * d:
        return True
    N, K = kernel.grid.size, kernel.n_offsets
    rows = np.repeat(np.arange(N), K)
    cols = np.stack([kernel.target_nodes(k) for k in range(K)], axis=1).ravel()
    graph = csr_matrix((np.ones(rows.size), (rows, cols)), shape=(N, N))
    ncomp, _ = connected_components(graph, directed=True, connection="strong")
    return ncomp == 1


def _cycle_from_preds(pred, start):
    """Nodes of the pred-graph cycle through ``start`` in forward order."""
    cyc = [start]
    v = pred[start]
    while v != start:
        cyc.append(int(v))
        v = pred[v]
    return cyc[::-1]


def effective_action_karp(kernel: ActionKernel, rel_tol: float = 1e-12):
    """Minimum cycle mean of the windowed graph and one attaining cycle.

    The iterates D_k = T^k[0] bracket the answer: min_y (D_k - D_{k-1})
    is a lower bound and the best cycle of the current predecessor map
    is an upper bound attained by an actual cycle.  The loop stops when
    the bracket closes; otherwise Karp's formula is evaluated after N
    steps.
    """
    t0 = time.perf_counter()
    if not _strongly_connected(kernel):
        raise DisconnectedGraph("window offsets do not connect the grid graph")
    N = kernel.grid.size
    _, base, foff = kernel._layout
    inc = kernel.incoming
    # ring buffer of recent iterates: with L the length of the current best
    # cycle, min_y (D_k - D_{k-L}) / L is also a lower bound, which closes
    # the bracket when the critical cycles have period > 1
    depth = int(min(N, max(64, 2**27 // (8 * N))))
    history = np.empty((depth, N))
    shifts = np.zeros(N + 1)
    D = np.zeros(N)
    history[0] = D
    out = np.empty(N)
    arg = np.empty(N, dtype=np.int64)
    cols = np.arange(N)
    # predecessor maps of every level, kept for the walk-back of the fallback
    preds = np.empty((N + 1, N), dtype=np.int32) if N * N * 4 <= 2**30 else None
    for k in range(1, N + 1):
        _kernels.backward_apply(kernel.padded(D), inc, base, foff, 1.0, out, arg)
        lo = float(np.min(out - D))
        pred = kernel.source_nodes(arg)
        if preds is not None:
            preds[k] = pred
        hi, start = _kernels.pred_graph_best_cycle(pred, inc[cols, arg])
        cycle = _cycle_from_preds(pred, int(start))
        L = len(cycle)
        if 1 < L < depth and L <= k:
            back = history[(k - L) % depth]
            lo = max(lo, float(np.min(out - back) + shifts[k - 1] - shifts[k - L]) / L)
        if hi - lo <= rel_tol * (1.0 + abs(hi)):
            return _report(kernel, "karp", _cycle_mean(kernel, cycle), k, hi - lo, t0, certificate="bracket"), cycle
        m = float(out.min())
        D = out - m
        shifts[k] = shifts[k - 1] + m
        history[k % depth] = D
    value, cycle = _karp_formula(kernel, D + shifts[N], preds)
    if cycle is not None:
        value = _cycle_mean(kernel, cycle)
    return _report(kernel, "karp", value, N, 0.0, t0, certificate="formula"), cycle


def _karp_formula(kernel, DN=None, preds=None):
    """Karp's min_v max_k (D_N - D_k)/(N - k) with a super-source start.

    ``DN`` and ``preds`` may be supplied from an earlier pass over the
    same recurrence.
    """
    N = kernel.grid.size
    _, base, foff = kernel._layout
    inc = kernel.incoming
    out = np.empty(N)
    arg = np.empty(N, dtype=np.int64)
    if DN is None or preds is None:
        if N * N * 4 > 2**30:
            raise SolverError("graph too large for the full Karp recurrence")
        preds = np.empty((N + 1, N), dtype=np.int32)
        D = np.zeros(N)
        for k in range(1, N + 1):
            _kernels.backward_apply(kernel.padded(D), inc, base, foff, 1.0, out, arg)
            preds[k] = kernel.source_nodes(arg)
            D = out.copy()
        DN = D
    runmax = np.full(N, -np.inf)
    D = np.zeros(N)
    for k in range(N):
        _kernels.karp_running_max(DN, D, N, k, runmax)
        _kernels.backward_apply(kernel.padded(D), inc, base, foff, 1.0, out, arg)
        D = out.copy()
    v = int(np.argmin(runmax))
    value = float(runmax[v])
    # walk the N-step optimal walk backwards; any repeated node closes a cycle
    walk = [v]
    for k in range(N, 0, -1):
        walk.append(int(preds[k][walk[-1]]))
    walk = walk[::-1]
    best, best_cycle = np.inf, None
    seen = {}
    for pos, node in enumerate(walk):
        if node in seen:
            cyc = walk[seen[node]:pos]
            cost = sum(_edge_cost(kernel, cyc[i], cyc[(i + 1) % len(cyc)]) for i in range(len(cyc)))
            if cost / len(cyc) < best:
                best, best_cycle = cost / len(cyc), cyc
        seen[node] = pos
    return value, best_cycle


def _cycle_mean(kernel, cycle):
    # same expression as integrating the uniform cycle measure, so both agree bitwise
    L = len(cycle)
    costs = np.array([_edge_cost(kernel, cycle[i], cycle[(i + 1) % L]) for i in range(L)])
    return float(np.sum(np.full(L, 1.0 / L) * costs))


def _edge_cost(kernel, x, y):
    g = kernel.grid
    o = (g.multi_index[y] - g.multi_index[x]) % g.n
    o = np.where(2 * o > g.n, o - g.n, o)
    hit = np.nonzero(np.all(kernel.offsets == o, axis=1))[0]
    if hit.size == 0:
        return np.inf
    return float(kernel.weights[x, hit[0]])


def effective_action_mean_per_site(kernel: ActionKernel, tol: float = 1e-10, max_iter: int = 100000,
                                   max_period: Optional[int] = None):
    """Growth rate of T^k[0].

    The one-step increments D_k - D_{k-1} bracket the effective action.
    When the iterates settle into a periodic regime (D_{k+L} = D_k + L E
    for some period L) the bracket never closes, so increments over lags
    L <= max_period are checked as well.
    """
    t0 = time.perf_counter()
    _, base, foff = kernel._layout
    N = kernel.grid.size
    lags = max_period if max_period is not None else min(4 * N, 512)
    hist = np.zeros((lags, N))  # ring buffer of normalized iterates
    hshift = np.zeros(lags)
    D = np.zeros(N)
    out = np.empty(N)
    arg = np.empty(N, dtype=np.int64)
    shift = 0.0
    sequence = []
    lo = hi = 0.0
    for k in range(1, max_iter + 1):
        hist[(k - 1) % lags] = D
        hshift[(k - 1) % lags] = shift
        _kernels.backward_apply(kernel.padded(D), kernel.incoming, base, foff, 1.0, out, arg)
        diff = out - D
        lo, hi = float(diff.min()), float(diff.max())
        m = float(out.min())
        shift += m
        sequence.append(shift)
        D = out - m
        if hi - lo <= tol:
            return _report(kernel, "mean-per-site", 0.5 * (lo + hi), k, hi - lo, t0,
                           min_sequence=sequence, cesaro=shift / k, period=1)
        if k > 1:
            depth = min(k, lags)
            slots = (k - np.arange(1, depth + 1)) % lags  # iterate k - L sits in slot (k - L) % lags
            inc = (D[None, :] - hist[slots]) + (shift - hshift[slots])[:, None]
            spread = inc.max(axis=1) - inc.min(axis=1)
            L = np.arange(1, depth + 1)
            ok = np.nonzero(spread <= tol * L)[0]
            if ok.size:
                j = int(ok[0])
                value = float(0.5 * (inc[j].max() + inc[j].min())) / (j + 1)
                return _report(kernel, "mean-per-site", value, k, float(spread[j]) / (j + 1), t0,
                               min_sequence=sequence, cesaro=shift / k, period=j + 1)
    raise MaxIterExceeded(f"mean-per-site bracket did not close ({hi - lo:.3e})", residual=hi - lo,
                          iterations=max_iter)


def min_iterate_sequence(kernel: ActionKernel, k_max: int):
    """[min_y T^k[0](y) for k = 1..k_max]."""
    _, base, foff = kernel._layout
    D = np.zeros(kernel.grid.size)
    out = np.empty_like(D)
    arg = np.empty(D.size, dtype=np.int64)
    seq = []
    for _ in range(k_max):
        _kernels.backward_apply(kernel.padded(D), kernel.incoming, base, foff, 1.0, out, arg)
        D = out.copy()
        seq.append(float(D.min()))
    return seq


@dataclass
class DiscountPath:
    """Iterates along a delta schedule."""

    deltas: list
    solutions: list  # u_{tau,delta}
    shifted: list  # u_{tau,delta} - E/(tau delta)
    gaps: list  # Cauchy gaps between consecutive shifted solutions
    effective_action: float
    reports: list
    converged: bool


def discount_path(kernel: ActionKernel, delta_schedule, tol, effective_action=None, inner_tol=None,
                  stop_early=True, max_iter=None):
    """Follow u_{tau,delta} - E/(tau delta) down a decreasing delta schedule.

    Each solve is warm-started from the previous shifted solution; the
    inner tolerance defaults to tol/10 so that solver error stays below
    the Cauchy gaps being measured.
    """
    deltas = [float(d) for d in delta_schedule]
    if any(b >= a for a, b in zip(deltas, deltas[1:])) or not deltas:
        raise ValueError("delta schedule must be strictly decreasing")
    if effective_action is None:
        effective_action = effective_action_karp(kernel)[0].effective_action
    tau = kernel.tau
    inner_tol = tol / 10.0 if inner_tol is None else inner_tol
    sols, shifted, gaps, reps = [], [], [], []
    prev = None
    for delta in deltas:
        base = effective_action / (tau * delta)
        u0 = None if prev is None else prev + base
        u, rep = solve_discounted(kernel, delta, inner_tol, max_iter=max_iter, u0=u0)
        w = u.values - base
        sols.append(u)
        shifted.append(GridFunction(kernel.grid, w))
        reps.append(rep)
        if prev is not None:
            gaps.append(float(np.max(np.abs(w - prev))))
            if stop_early and gaps[-1] <= tol:
                return DiscountPath(deltas[: len(sols)], sols, shifted, gaps, effective_action, reps, True)
        prev = w
    converged = bool(gaps) and gaps[-1] <= tol
    return DiscountPath(deltas, sols, shifted, gaps, effective_action, reps, converged)


def effective_action_discounted(kernel: ActionKernel, delta_schedule=None, tol: float = 1e-9):
    """tau*delta*mean(u_{tau,delta}) at the last delta, Richardson-extrapolated.

    The extrapolation assumes a bias linear in delta; the raw last value
    is kept in ``extras['last_mean']``.
    """
    t0 = time.perf_counter()
    deltas = default_schedule() if delta_schedule is None else list(delta_schedule)
    if any(b >= a for a, b in zip(deltas, deltas[1:])) or not all(0 < d <= 1 for d in deltas):
        raise ValueError("delta schedule must be strictly decreasing within (0, 1]")
    tau = kernel.tau
    means, spreads, iters = [], [], 0
    prev = None
    res = 0.0
    for delta in deltas:
        td = tau * delta
        u0 = None
        if prev is not None:
            ptd, pu = prev
            u0 = ptd * pu.mean() / td + (pu - pu.mean())
        u, rep = solve_discounted(kernel, delta, tol, u0=u0)
        means.append(float(np.mean(td * u.values)))
        spreads.append(float(td * (u.values.max() - u.values.min())))
        iters += rep.iterations
        res = rep.final_residual
        prev = (td, u.values)
    if len(deltas) >= 2:
        d1, d2 = deltas[-2], deltas[-1]
        e1, e2 = means[-2], means[-1]
        value = (d1 * e2 - d2 * e1) / (d1 - d2)
    else:
        value = means[-1]
    return _report(kernel, "discounted-limit", float(value), iters, res, t0, deltas[-1],
                   last_mean=means[-1], means=means, spreads=spreads, deltas=deltas,
                   extrapolation="richardson-linear-in-delta (heuristic)")


def calibration_defect(u: GridFunction, kernel: ActionKernel, effective_action: float) -> GridFunction:
    """u(y) + E - min_x {u(x) + E(x, y)} at every node."""
    Tu, _ = backward_lax_oleinik(u, kernel)
    return GridFunction(kernel.grid, u.values + effective_action - Tu.values)


def polish(u: GridFunction, kernel: ActionKernel, effective_action: float, tol: float = 1e-12,
           max_iter: int = 200000, chunk: int = 2000):
    """Undiscounted iteration u <- T[u] - E until the update is <= tol.

    The update norm is nonincreasing (T is non-expansive) but need not go
    to zero on rotational orbits, so iteration stops early once a chunk
    of sweeps fails to halve it.
    """
    v = np.asarray(u.values, dtype=float)
    total, res = 0, np.inf
    while total < max_iter:
        v, it, r = _iterate(kernel, v, 1.0, effective_action, tol, min(chunk, max_iter - total))
        total += it
        stalled = r > 0.5 * res
        res = r
        if r <= tol or stalled:
            break
    return GridFunction(kernel.grid, v), total, res


def solve_weak_kam(kernel: ActionKernel, delta_schedule=None, tol: float = 1e-3, polish_tol: float = 1e-12,
                   max_polish: int = 200000) -> WeakKamSolution:
    """Weak KAM solution through the vanishing-discount limit.

    The Cauchy limit of u_{tau,delta} - E/(tau delta) is reached to
    ``tol`` and then polished by undiscounted iteration, which removes
    the O(delta) bias and leaves a fixed point of T - E up to rounding.
    """
    t0 = time.perf_counter()
    schedule = default_schedule() if delta_schedule is None else list(delta_schedule)
    karp, _ = effective_action_karp(kernel)
    ebar = karp.effective_action
    path = discount_path(kernel, schedule, tol, ebar)
    if not path.converged:
        raise ScheduleExhausted(f"Cauchy gap {path.gaps[-1] if path.gaps else float('nan'):.3e} above tol {tol:.1e}",
                                last_gap=path.gaps[-1] if path.gaps else None)
    u = path.shifted[-1]
    u, it, res = polish(u, kernel, ebar, polish_tol, max_polish)
    u = normalize_min_zero(u)
    defect = calibration_defect(u, kernel, ebar)
    if np.max(np.abs(defect.values)) > tol:
        raise SolverError(f"calibration defect {np.max(np.abs(defect.values)):.3e} exceeds tol after polishing")
    iters = sum(r.iterations for r in path.reports) + it
    rep = _report(kernel, "karp", ebar, iters, res, t0, path.deltas[-1], cauchy_gaps=path.gaps,
                  polish_iterations=it)
    return WeakKamSolution(u, ebar, defect, rep, path.gaps)


def selected_solution(kernel: ActionKernel, delta_schedule=None, tol: float = 1e-3, path=None) -> GridFunction:
    """Raw Cauchy limit of u_{tau,delta} - E/(tau delta); not normalized."""
    schedule = default_schedule() if delta_schedule is None else list(delta_schedule)
    if path is None:
        path = discount_path(kernel, schedule, tol)
    if not path.converged:
        raise ScheduleExhausted(f"Cauchy gap {path.gaps[-1] if path.gaps else float('nan'):.3e} above tol {tol:.1e}",
                                last_gap=path.gaps[-1] if path.gaps else None)
    return path.shifted[-1]


def supinf_gap(u: GridFunction, kernel: ActionKernel, effective_action: float) -> float:
    """E - inf over windowed pairs of {E(x, y) - u(y) + u(x)}."""
    Tu, _ = backward_lax_oleinik(u, kernel)
    return float(effective_action - np.min(Tu.values - u.values))


@dataclass
class SweepEntry:
    tau: float
    n: int
    effective_action: float
    normalized_effective: float
    u: GridFunction
    lipschitz: float
    lipschitz_bound: float
    max_jump: float  # largest argmin displacement / tau
    window_radius: float
    wall_time: float


@dataclass
class SweepResult:
    entries: list
    reference: float
    fit: Optional[RateFit]
    fit_error: Optional[str]
    cauchy_gaps: list


def _sweep_cell(model, p, tau, c_h, exponent, delta_schedule, tol, safety):
    t0 = time.perf_counter()
    action = DiscreteAction(model, tau, p)
    grid = PeriodicGrid.for_step(tau, model.dimension, c_h, exponent)
    bounds = estimate_bounds(action, safety=safety)
    kernel = tabulate_kernel(action, grid, bounds)
    sol = solve_weak_kam(kernel, delta_schedule, tol)
    _, field_ = backward_lax_oleinik(sol.u, kernel)
    jump = float(np.max(np.linalg.norm(field_.best_offset * grid.spacing, axis=1))) / tau
    return SweepEntry(tau, grid.n, sol.effective_action, sol.effective_action / tau, sol.u,
                      discrete_lipschitz(sol.u), bounds.lipschitz_bound, jump, bounds.window_radius,
                      time.perf_counter() - t0)


def _default_reference(model, p):
    """Hbar(P) when it is cheaply known: P = 0 analytically, d = 1 by quadrature."""
    from .continuum import analytic_effective_hamiltonian, effective_hamiltonian_1d
    from .models import MECHANICAL

    if model.kind != MECHANICAL:
        return None
    if not np.any(p):
        return analytic_effective_hamiltonian(model)
    if model.dimension == 1:
        return effective_hamiltonian_1d(model, float(np.ravel(p)[0]))
    return None


def continuum_limit_sweep(model, p, tau_schedule, c_h: float = 1.0, exponent: float = 2.0, delta_schedule=None,
                          tol: float = 1e-3, reference: Optional[float] = None, threads: int = 1,
                          safety: float = 1.5) -> SweepResult:
    """Weak KAM solutions along a decreasing tau schedule with grids h <= c_h tau^exponent.

    The rate is fitted on |E_tau/tau + Hbar| with Hbar the analytic
    reference (``reference``); zero errors are reported as saturated.
    """
    taus = [float(t) for t in tau_schedule]
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau schedule must be strictly decreasing")
    if reference is None:
        reference = _default_reference(model, p)
    args = [(model, p, t, c_h, exponent, delta_schedule, tol, safety) for t in taus]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            entries = list(pool.map(lambda a: _sweep_cell(*a), args))
    else:
        entries = [_sweep_cell(*a) for a in args]
    gaps = []
    for a, b in zip(entries, entries[1:]):
        coarse = a.u.grid if a.n <= b.n else b.u.grid
        gaps.append(sup_norm_diff(resample(a.u, coarse), resample(b.u, coarse)))
    fit, err = None, None
    if reference is not None:
        try:
            fit = fit_rate([(e.tau, abs(e.normalized_effective + reference)) for e in entries])
        except Exception as exc:  # zero signal is reported, not raised
            err = str(exc)
    return SweepResult(entries, reference, fit, err, gaps)
