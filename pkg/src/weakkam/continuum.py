"""Continuum reference values: effective Hamiltonians, the pendulum profile, u_delta by self-refinement."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .errors import ChainTooShort, LadderNotConverging, UnsupportedModel
from .grid import GridFunction, PeriodicGrid, interpolate, resample, sup_norm_diff, to_csv
from .laxoleinik import tabulate_kernel
from .models import MECHANICAL, DiscreteAction, LagrangianModel, estimate_bounds
from .solvers import solve_discounted


@dataclass(frozen=True)
class ContinuumReference:
    effective_hamiltonian_at_zero: float
    closed_form_u: Optional[Callable] = None
    provenance: str = ""


def _require_mechanical(model):
    if model.kind != MECHANICAL:
        raise UnsupportedModel("analytic references need the quadratic-kinetic-plus-potential kind")


def analytic_effective_hamiltonian(model: LagrangianModel) -> float:
    """H(0) = -min V for L = m|v|^2/2 + V (rest at the bottom of the well)."""
    _require_mechanical(model)
    vmin, _ = model.potential_bounds()
    return -float(vmin)


def effective_hamiltonian_1d(model: LagrangianModel, p: float, quad_tol: float = 1e-12) -> float:
    """H(P) for a one-dimensional mechanical model.

    Flat at -min V for |P| up to the critical value int sqrt(2m(V - min V));
    beyond it, the root of int sqrt(2m(H + V)) dx = |P|.
    """
    _require_mechanical(model)
    if model.dimension != 1:
        raise UnsupportedModel("effective_hamiltonian_1d is one-dimensional")
    vmin, _ = model.potential_bounds()
    m = model.mass

    def mean_momentum(h):
        f = lambda x: np.sqrt(max(2.0 * m * (h + float(model.potential_value(x))), 0.0))
        return integrate.quad(f, 0.0, 1.0, limit=400, epsabs=quad_tol, epsrel=quad_tol)[0]

    p = abs(float(p))
    crit = mean_momentum(-vmin)
    if p <= crit:
        return -float(vmin)
    hi = max(1.0, p * p / (2 * m))
    while mean_momentum(hi) < p:
        hi *= 2.0
    return float(optimize.brentq(lambda h: mean_momentum(h) - p, -vmin, hi, xtol=1e-14, rtol=1e-14))


def critical_momentum_1d(model: LagrangianModel) -> float:
    _require_mechanical(model)
    vmin, _ = model.potential_bounds()
    f = lambda x: np.sqrt(max(2.0 * model.mass * (float(model.potential_value(x)) - vmin), 0.0))
    return integrate.quad(f, 0.0, 1.0, limit=400, epsabs=1e-13, epsrel=1e-13)[0]


def pendulum_closed_form(K: float = 1.0) -> ContinuumReference:
    """Min-normalized periodic viscosity solution for V = K/(4 pi^2)(1 - cos 2 pi x)."""
    if K <= 0:
        raise ValueError("K must be positive")
    amp = np.sqrt(K) / np.pi**2

    def u(x):
        x = np.asarray(x, dtype=float)
        x = x - np.floor(x)
        s = np.minimum(x, 1.0 - x)  # mirror first so u(x) = u(1 - x) holds bitwise
        return amp * (1.0 - np.cos(np.pi * s))

    return ContinuumReference(0.0, u, f"pendulum K={K}: u' = (sqrt(K)/pi)|sin(pi x)|, peak sqrt(K)/pi^2 at x=1/2")


def pendulum_profile_by_quadrature(K: float, x, mass: float = 1.0):
    """Two-sided distance int sqrt(2 m V) from the well x=0, by adaptive quadrature."""
    V = lambda s: K / (4 * np.pi**2) * (1 - np.cos(2 * np.pi * s))
    f = lambda s: np.sqrt(2.0 * mass * V(s))
    out = []
    for xi in np.atleast_1d(np.asarray(x, dtype=float)):
        xi = xi - np.floor(xi)
        left = integrate.quad(f, 0.0, xi, epsabs=1e-14, epsrel=1e-14)[0]
        right = integrate.quad(f, xi, 1.0, epsabs=1e-14, epsrel=1e-14)[0]
        out.append(min(left, right))
    return np.array(out)


@dataclass
class DiscountedReference:
    u: GridFunction  # finest solution transferred to the coarsest grid
    finest: GridFunction
    solutions: list
    taus: list
    gaps: list  # Cauchy gaps between consecutive ladder entries (coarsest grid)
    error_estimate: float
    reliable: bool
    iterations: list = field(default_factory=list)


def ladder_grids(taus, dimension=1, c_h=1.0, exponent=2.0):
    """Grids for a tau ladder; nested whenever the step ratios allow it."""
    first = PeriodicGrid.for_step(taus[0], dimension, c_h, exponent)
    grids = [first]
    for t in taus[1:]:
        target = PeriodicGrid.for_step(t, dimension, c_h, exponent)
        ratio = (taus[0] / t) ** exponent
        scaled = int(round(first.n * ratio))
        if abs(ratio - round(ratio)) < 1e-9 and scaled >= target.n:
            grids.append(PeriodicGrid(dimension, scaled))
        else:
            grids.append(target)
    return grids


def reference_discounted_solution(model: LagrangianModel, p, delta: float, tau_ladder, c_h: float = 1.0,
                                  exponent: float = 2.0, tol: float = 1e-9, grids=None, warm_start: bool = True,
                                  safety: float = 1.5) -> DiscountedReference:
    """u_delta approximated by u_{tau,delta} at the finest tau of a ladder.

    Each rung is warm-started from the previous rung interpolated onto
    the finer grid.  The error estimate assumes first-order convergence
    in tau; the result is flagged unreliable when the last two Cauchy
    gaps shrink by less than a factor 1.5.
    """
    taus = [float(t) for t in tau_ladder]
    if len(taus) < 3:
        raise ValueError("the ladder needs at least 3 entries")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau ladder must be strictly decreasing")
    grids = ladder_grids(taus, model.dimension, c_h, exponent) if grids is None else grids
    coarse = grids[0]
    sols, iters = [], []
    prev = None
    for t, g in zip(taus, grids):
        action = DiscreteAction(model, t, p)
        kernel = tabulate_kernel(action, g, estimate_bounds(action, safety=safety))
        u0 = None
        if warm_start and prev is not None:
            x = g.coordinates
            u0 = interpolate(prev, x if g.dimension > 1 else x[:, 0])
        u, rep = solve_discounted(kernel, delta, tol, u0=u0)
        sols.append(u)
        iters.append(rep.iterations)
        prev = u
        del kernel
    on_coarse = [resample(s, coarse) for s in sols]
    gaps = [sup_norm_diff(a, b) for a, b in zip(on_coarse, on_coarse[1:])]
    if gaps[-1] > gaps[0] and gaps[-1] > 10 * tol:
        raise LadderNotConverging(f"Cauchy gaps grow along the ladder: {gaps}")
    t1, t2 = taus[-2], taus[-1]
    error = gaps[-1] * t2 / (t1 - t2)
    reliable = len(gaps) >= 2 and gaps[-1] * 1.5 <= gaps[-2]
    return DiscountedReference(on_coarse[-1], sols[-1], sols, taus, gaps, float(error), bool(reliable), iters)


def discounted_el_residual(model: LagrangianModel, p, tau: float, delta: float, chain) -> float:
    """Largest interior residual of the discounted discrete Euler-Lagrange equation.

    With v_n = (x_{n+1} - x_n)/tau along the forward-ordered chain, the
    residual is (1 - tau delta)(L_v(x_{n-1}, v_{n-1}) - P) - (L_v(x_n, v_n) - P)
    + tau L_x(x_n, v_n).
    """
    _require_mechanical(model)
    x = np.asarray(chain.forward_positions(), dtype=float)
    if x.shape[0] < 3:
        raise ChainTooShort("the residual needs at least 3 chain points")
    x = x.reshape(x.shape[0], -1)
    pv = np.atleast_1d(np.asarray(p, dtype=float)) if np.size(p) else np.zeros(x.shape[1])
    v = (x[1:] - x[:-1]) / tau
    beta = 1.0 - tau * delta
    m = model.mass
    xn = x[1:-1]
    grad = model.potential_gradient(xn if model.dimension > 1 else xn[:, 0])
    grad = np.asarray(grad).reshape(xn.shape)
    res = beta * (m * v[:-1] - pv) - (m * v[1:] - pv) + tau * grad
    return float(np.max(np.linalg.norm(res, axis=1)))


def export_reference(ref: ContinuumReference, grid: PeriodicGrid, path=None):
    x = grid.coordinates
    f = GridFunction(grid, ref.closed_form_u(x[:, 0]))
    return to_csv(f, path, comment=f"provenance: {ref.provenance}")
