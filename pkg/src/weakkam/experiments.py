"""Subcommand runners: each reads an ExperimentConfig and writes CSV artifacts."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import ExperimentConfig, check_window
from .errors import PropertyViolation
from .grid import GridFunction, PeriodicGrid, interpolate, resample, sup_norm_diff, to_csv
from .laxoleinik import tabulate_kernel
from .mather import mane_potential, mather_set, minimizing_measure, selected_solution_dual
from .models import estimate_bounds
from .rates import fit_rate
from .solvers import (
    CSV_FIELDS,
    continuum_limit_sweep,
    discount_path,
    effective_action_discounted,
    effective_action_karp,
    effective_action_mean_per_site,
    solve_discounted,
    solve_weak_kam,
    supinf_gap,
)


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_rows(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _setup(cfg: ExperimentConfig, tau):
    action = cfg.action_for(tau)
    bounds = estimate_bounds(action, safety=cfg.solver.safety)
    grid = check_window(cfg, tau, bounds)
    kernel = tabulate_kernel(action, grid, bounds)
    return action, bounds, kernel


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def run_effective_action(cfg, out, threads=1, seed=0):
    def cell(tau):
        _, bounds, kernel = _setup(cfg, tau)
        karp, _ = effective_action_karp(kernel)
        disc = effective_action_discounted(kernel, cfg.solver.delta_schedule, cfg.solver.discount_tol)
        rows = [karp, disc]
        try:
            rows.append(effective_action_mean_per_site(kernel))
        except Exception:  # bracket may fail to close on periodic critical sets
            pass
        c_lip = bounds.lipschitz_bound * np.sqrt(kernel.grid.dimension)
        tol = max(1e-6, 2 * tau * cfg.solver.delta_schedule[-1] * c_lip)
        return [(r, abs(r.effective_action - karp.effective_action), tol) for r in rows]

    results = _map(cell, cfg.taus(), threads)
    rows = []
    for cell_rows in results:
        for r, diff, tol in cell_rows:
            rows.append([r.route, r.tau, r.delta, r.n, r.effective_action, r.normalized_effective, r.iterations,
                         r.final_residual, r.wall_time, diff, tol, diff <= tol])
    write_rows(os.path.join(out, "effective_action.csv"), list(CSV_FIELDS) + ["cross_check", "tolerance", "agree"],
               rows)
    return {"rows": len(rows), "all_agree": all(r[-1] for r in rows)}


def run_weak_kam(cfg, out, threads=1, seed=0):
    summary = []
    for tau in cfg.taus():
        _, _, kernel = _setup(cfg, tau)
        sol = solve_weak_kam(kernel, cfg.solver.delta_schedule, cfg.solver.tol)
        tag = f"tau_{tau:g}"
        to_csv(sol.u, os.path.join(out, f"weak_kam_{tag}.csv"))
        to_csv(sol.calibration_defect, os.path.join(out, f"calibration_defect_{tag}.csv"))
        gap = supinf_gap(sol.u, kernel, sol.effective_action)
        summary.append([tau, kernel.grid.n, sol.effective_action, sol.effective_action / tau,
                        float(np.max(np.abs(sol.calibration_defect.values))), gap])
    write_rows(os.path.join(out, "weak_kam_summary.csv"),
               ["tau", "n", "effective_action", "normalized_effective", "max_calibration_defect", "supinf_gap"], summary)
    return {"cells": len(summary)}


def run_discounted(cfg, out, threads=1, seed=0):
    deltas = [cfg.solver.delta] if cfg.solver.delta is not None else cfg.solver.delta_schedule
    rows = []
    for tau in cfg.taus():
        _, bounds, kernel = _setup(cfg, tau)
        for delta in deltas:
            u, rep = solve_discounted(kernel, delta, cfg.solver.discount_tol, cfg.solver.max_iter)
            to_csv(u, os.path.join(out, f"discounted_tau_{tau:g}_delta_{delta:g}.csv"))
            lo_b = float(kernel.weights.min()) / tau
            hi_b = float(kernel.weights[:, kernel.zero_index].max()) / tau
            du = delta * u.values
            slack = cfg.solver.discount_tol * delta
            ok = bool(du.min() >= lo_b - slack and du.max() <= hi_b + slack)
            rows.append([tau, delta, kernel.grid.n, du.min(), du.max(), lo_b, hi_b, ok, rep.iterations,
                         rep.final_residual])
            if not ok:
                raise PropertyViolation(
                    f"discounted solution bounds (inf E/tau <= delta u <= sup E(x,x)/tau) violated at tau={tau}, delta={delta}")
    write_rows(os.path.join(out, "discounted_bounds.csv"),
               ["tau", "delta", "n", "delta_u_min", "delta_u_max", "lower_bound", "upper_bound", "within", "iterations",
                "final_residual"], rows)
    return {"rows": len(rows)}


def run_select(cfg, out, threads=1, seed=0):
    rows = []
    for tau in cfg.taus():
        _, _, kernel = _setup(cfg, tau)
        karp, _ = effective_action_karp(kernel)
        ebar = karp.effective_action
        path = discount_path(kernel, cfg.solver.delta_schedule, cfg.solver.tol, ebar)
        ustar = path.shifted[-1]
        mu = minimizing_measure(kernel)
        dual = selected_solution_dual(kernel, ebar, [mu])
        gap = sup_norm_diff(ustar, dual)
        to_csv(ustar, os.path.join(out, f"selected_tau_{tau:g}.csv"))
        to_csv(dual, os.path.join(out, f"selected_dual_tau_{tau:g}.csv"))
        rows.append([tau, kernel.grid.n, path.deltas[-1], path.gaps[-1] if path.gaps else float("nan"), gap,
                     path.converged])
    write_rows(os.path.join(out, "select_summary.csv"),
               ["tau", "n", "last_delta", "last_cauchy_gap", "dual_gap", "converged"], rows)
    return {"rows": len(rows)}


def run_mane(cfg, out, threads=1, seed=0):
    for tau in cfg.taus():
        _, _, kernel = _setup(cfg, tau)
        karp, cycle = effective_action_karp(kernel)
        ebar = karp.effective_action
        mu = minimizing_measure(kernel)
        mu.to_csv(os.path.join(out, f"minimizing_measure_tau_{tau:g}.csv"))
        for s in mu.support():
            phi = mane_potential(kernel, ebar, int(s))
            to_csv(phi, os.path.join(out, f"mane_tau_{tau:g}_source_{int(s)}.csv"))
        nodes = mather_set(kernel, cfg.solver.mather_tol, ebar)
        write_rows(os.path.join(out, f"mather_set_tau_{tau:g}.csv"), ["node_index"], [[int(v)] for v in nodes])
    return {}


def run_sweep_tau(cfg, out, threads=1, seed=0):
    model = cfg.model.build()
    p = cfg.p_vector()
    res = continuum_limit_sweep(model, p, cfg.taus(), cfg.grid.c_h, cfg.grid.exponent, cfg.solver.delta_schedule,
                                cfg.solver.tol, None, threads, cfg.solver.safety)
    reference = res.reference
    rows = []
    for e in res.entries:
        err = abs(e.normalized_effective + reference) if reference is not None else float("nan")
        rows.append([e.tau, e.n, e.effective_action, e.normalized_effective, err, e.lipschitz, e.lipschitz_bound,
                     e.max_jump, e.window_radius])
    write_rows(os.path.join(out, "sweep_tau.csv"),
               ["tau", "n", "effective_action", "normalized_effective", "error", "lipschitz", "lipschitz_bound",
                "max_jump_over_tau", "window_radius"], rows)
    fit = res.fit
    write_rows(os.path.join(out, "rate_fit.csv"), ["slope", "intercept", "r2", "n_points", "status"],
               [[fit.slope, fit.intercept, fit.r2, fit.n_points, "ok"]] if fit else
               [[float("nan"), float("nan"), float("nan"), 0, "saturated: " + (res.fit_error or "no reference")]])
    write_rows(os.path.join(out, "cauchy_gaps.csv"), ["tau_coarse", "tau_fine", "gap"],
               [[a.tau, b.tau, g] for a, b, g in zip(res.entries, res.entries[1:], res.cauchy_gaps)])
    return {"slope": fit.slope if fit else None, "r2": fit.r2 if fit else None}


def run_sweep_delta(cfg, out, threads=1, seed=0):
    """Coupled limit tau = c * delta^2 along the delta schedule."""
    coupling = cfg.action.tau if cfg.action.tau is not None else 1.0
    deltas = cfg.solver.delta_schedule
    cells = []
    for delta in deltas:
        tau = coupling * delta * delta
        _, _, kernel = _setup(cfg, tau)
        karp, _ = effective_action_karp(kernel)
        u, rep = solve_discounted(kernel, delta, cfg.solver.discount_tol)
        w = u - karp.effective_action / (tau * delta)
        cells.append((delta, tau, kernel.grid, w))
    coarse = min((c[2] for c in cells), key=lambda g: g.n)
    shifted = [_transfer(c[3], coarse) for c in cells]
    gaps = [sup_norm_diff(a, b) for a, b in zip(shifted, shifted[1:])]
    rows = [[d, t, g.n, gaps[i - 1] if i else float("nan"), gaps[i - 1] / gaps[i - 2] if i >= 2 else float("nan")]
            for i, (d, t, g, _) in enumerate(cells)]
    write_rows(os.path.join(out, "sweep_delta.csv"), ["delta", "tau", "n", "cauchy_gap", "gap_ratio"], rows)
    pairs = [(c[0], g) for c, g in zip(cells[1:], gaps)]
    try:
        fit = fit_rate(pairs)
        status = [[fit.slope, fit.r2, fit.n_points, "ok"]]
    except Exception as exc:
        status = [[float("nan"), float("nan"), len(pairs), f"not fitted: {exc}"]]
    write_rows(os.path.join(out, "sweep_delta_fit.csv"), ["slope", "r2", "n_points", "status"], status)
    return {"gaps": gaps}


def _transfer(f: GridFunction, grid: PeriodicGrid):
    if f.grid.n % grid.n == 0:
        return resample(f, grid)
    x = grid.coordinates
    return GridFunction(grid, interpolate(f, x if grid.dimension > 1 else x[:, 0]))


def run_validate(cfg, out, threads=1, seed=0):
    """Property suite on the configured model; raises PropertyViolation on the first failure."""
    from . import validation

    rows = validation.run_suite(cfg, seed=seed)
    write_rows(os.path.join(out, "validate.csv"), ["property", "value", "threshold", "passed"], rows)
    failed = [r for r in rows if not r[-1]]
    if failed:
        names = ", ".join(r[0] for r in failed)
        raise PropertyViolation(f"violated invariants: {names}")
    return {"checked": len(rows)}


RUNNERS = {
    "effective-action": run_effective_action,
    "weak-kam": run_weak_kam,
    "discounted": run_discounted,
    "select": run_select,
    "mane": run_mane,
    "sweep-tau": run_sweep_tau,
    "sweep-delta": run_sweep_delta,
    "validate": run_validate,
}
