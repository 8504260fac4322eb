"""Discrete weak KAM toolkit: Lax-Oleinik operators, effective actions and Mather measures on periodic grids."""
from .errors import *  # noqa: F401,F403
from .grid import (
    GridFunction,
    PeriodicGrid,
    discrete_lipschitz,
    dist_torus,
    normalize_min_zero,
    oscillation,
    sup_norm_diff,
)
from .laxoleinik import (
    ActionKernel,
    ArgminField,
    backward_lax_oleinik,
    discounted_lax_oleinik,
    forward_lax_oleinik,
    min_plus_convolve,
    min_plus_power,
    tabulate_kernel,
)
from .continuum import (
    analytic_effective_hamiltonian,
    critical_momentum_1d,
    effective_hamiltonian_1d,
    pendulum_closed_form,
    reference_discounted_solution,
)
from .mather import (
    CalibratedChain,
    HolonomicMeasure,
    discounted_occupation_measure,
    extract_calibrated_chain,
    mane_potential,
    mather_set,
    minimizing_measure,
    selected_solution_dual,
)
from .models import (
    AprioriBounds,
    DiscreteAction,
    LagrangianModel,
    estimate_bounds,
    eval_discrete_action,
    eval_lagrangian,
    free_particle,
    legendre_transform,
    pendulum,
)
from .rates import RateFit, fit_rate
from .solvers import (
    SolveReport,
    WeakKamSolution,
    continuum_limit_sweep,
    effective_action_discounted,
    effective_action_karp,
    effective_action_mean_per_site,
    selected_solution,
    solve_discounted,
    solve_weak_kam,
    supinf_gap,
)

__version__ = "0.1.0"
