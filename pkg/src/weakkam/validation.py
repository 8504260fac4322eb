"""Invariant checks used by the ``validate`` subcommand."""
from __future__ import annotations

import numpy as np

from .grid import GridFunction, sup_norm_diff
from .laxoleinik import backward_lax_oleinik, discounted_lax_oleinik, tabulate_kernel
from .mather import minimizing_measure
from .models import estimate_bounds
from .solvers import (
    effective_action_discounted,
    effective_action_karp,
    solve_discounted,
    solve_weak_kam,
    supinf_gap,
)


def operator_law_residuals(kernel, rng, pairs=20, scale=0.1):
    """Worst violations of monotonicity, non-expansiveness, shift and inf-commutation."""
    g = kernel.grid
    worst = dict(monotonicity=0.0, nonexpansive=0.0, constant_shift=0.0, inf_commutation=0.0)
    for _ in range(pairs):
        u = GridFunction(g, scale * rng.standard_normal(g.size))
        v = GridFunction(g, u.values + scale * rng.random(g.size))  # v >= u
        c = float(rng.normal())
        Tu, _ = backward_lax_oleinik(u, kernel)
        Tv, _ = backward_lax_oleinik(v, kernel)
        worst["monotonicity"] = max(worst["monotonicity"], float(np.max(Tu.values - Tv.values)))
        w = GridFunction(g, scale * rng.standard_normal(g.size))
        Tw, _ = backward_lax_oleinik(w, kernel)
        worst["nonexpansive"] = max(worst["nonexpansive"], sup_norm_diff(Tu, Tw) - sup_norm_diff(u, w))
        Tuc, _ = backward_lax_oleinik(u + c, kernel)
        worst["constant_shift"] = max(worst["constant_shift"], float(np.max(np.abs(Tuc.values - Tu.values - c))))
        m = GridFunction(g, np.minimum(u.values, w.values))
        Tm, _ = backward_lax_oleinik(m, kernel)
        worst["inf_commutation"] = max(worst["inf_commutation"],
                                       float(np.max(np.abs(Tm.values - np.minimum(Tu.values, Tw.values)))))
    return worst


def contraction_excess(kernel, delta, rng, pairs=20, scale=0.1):
    """max of ||T u - T v|| - (1 - tau delta)||u - v|| over random pairs."""
    beta = 1.0 - kernel.tau * delta
    g = kernel.grid
    worst = -np.inf
    for _ in range(pairs):
        u = GridFunction(g, scale * rng.standard_normal(g.size))
        v = GridFunction(g, scale * rng.standard_normal(g.size))
        Tu, _ = discounted_lax_oleinik(u, kernel, delta)
        Tv, _ = discounted_lax_oleinik(v, kernel, delta)
        worst = max(worst, sup_norm_diff(Tu, Tv) - beta * sup_norm_diff(u, v))
    return float(worst)


def run_suite(cfg, seed=0):
    rng = np.random.default_rng(seed)
    tau = cfg.taus()[0]
    action = cfg.action_for(tau)
    bounds = estimate_bounds(action, safety=cfg.solver.safety)
    grid = cfg.grid_for(tau)
    kernel = tabulate_kernel(action, grid, bounds)
    rows = []
    for name, val in operator_law_residuals(kernel, rng).items():
        rows.append([name, val, 1e-12, val <= 1e-12])
    delta = cfg.solver.delta_schedule[0]
    exc = contraction_excess(kernel, delta, rng)
    rows.append(["discounted_contraction", exc, 1e-15, exc <= 1e-15])

    karp, _ = effective_action_karp(kernel)
    ebar = karp.effective_action
    lo, hi = float(kernel.weights.min()), float(kernel.weights[:, kernel.zero_index].min())
    rows.append(["bracket_lower", lo - ebar, 0.0, lo <= ebar])
    rows.append(["bracket_upper", ebar - hi, 0.0, ebar <= hi])

    disc = effective_action_discounted(kernel, cfg.solver.delta_schedule, cfg.solver.discount_tol)
    c_lip = bounds.lipschitz_bound * np.sqrt(grid.dimension)
    tol = max(1e-6, 2 * tau * cfg.solver.delta_schedule[-1] * c_lip)
    diff = abs(disc.effective_action - ebar)
    rows.append(["cross_route_agreement", diff, tol, diff <= tol])

    u, _ = solve_discounted(kernel, delta, cfg.solver.discount_tol)
    du = delta * u.values
    slack = cfg.solver.discount_tol * delta
    rows.append(["discounted_lower_bound", lo / tau - du.min(), slack, du.min() >= lo / tau - slack])
    diag_max = float(kernel.weights[:, kernel.zero_index].max()) / tau
    rows.append(["discounted_upper_bound", du.max() - diag_max, slack, du.max() <= diag_max + slack])

    sol = solve_weak_kam(kernel, cfg.solver.delta_schedule, cfg.solver.tol)
    defect = float(np.max(np.abs(sol.calibration_defect.values)))
    rows.append(["calibration_defect", defect, cfg.solver.tol, defect <= cfg.solver.tol])
    gap = supinf_gap(sol.u, kernel, ebar)
    rows.append(["supinf_gap", gap, cfg.solver.tol, abs(gap) <= cfg.solver.tol])

    mu = minimizing_measure(kernel)
    rows.append(["measure_holonomy", mu.holonomy_residual(), 1e-10, mu.holonomy_residual() <= 1e-10])
    err = abs(mu.action(kernel) - ebar)
    rows.append(["measure_action", err, 1e-12 * (1 + abs(ebar)), err <= 1e-12 * (1 + abs(ebar))])
    return rows
