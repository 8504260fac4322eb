import numpy as np
import pytest

from conftest import make_kernel
from weakkam import (
    DiscreteAction,
    PeriodicGrid,
    analytic_effective_hamiltonian,
    critical_momentum_1d,
    discounted_lax_oleinik,
    effective_action_karp,
    effective_hamiltonian_1d,
    extract_calibrated_chain,
    free_particle,
    pendulum,
    pendulum_closed_form,
    reference_discounted_solution,
    solve_discounted,
    tabulate_kernel,
)
from weakkam.continuum import discounted_el_residual, export_reference, pendulum_profile_by_quadrature
from weakkam.errors import UnsupportedModel
from weakkam.grid import from_csv
from weakkam.models import CUSTOM_TABLE, CustomTable, LagrangianModel


def test_analytic_effective_hamiltonian():
    assert analytic_effective_hamiltonian(free_particle()) == 0.0
    assert analytic_effective_hamiltonian(pendulum(1.0)) == pytest.approx(0.0, abs=1e-15)
    assert analytic_effective_hamiltonian(pendulum(1.0, shift=0.3)) == pytest.approx(-0.3, abs=1e-15)


def test_unsupported_kind():
    vs = np.linspace(-1, 1, 5)
    custom = LagrangianModel(1, CUSTOM_TABLE, table=CustomTable(vs, np.tile(vs**2, (4, 1))))
    with pytest.raises(UnsupportedModel):
        analytic_effective_hamiltonian(custom)


def test_closed_form_profile():
    ref = pendulum_closed_form(1.0)
    u = ref.closed_form_u
    assert u(0.0) == 0.0
    assert u(0.5) == pytest.approx(1 / np.pi**2, rel=1e-15)
    x = np.arange(1025) / 1024  # 1 - x is exact on dyadics
    assert np.array_equal(u(x), u(1 - x))
    # independent two-sided distance by quadrature
    assert np.max(np.abs(u(x) - pendulum_profile_by_quadrature(1.0, x))) <= 1e-12
    assert pendulum_closed_form(4.0).closed_form_u(0.5) == pytest.approx(2 / np.pi**2)


def test_effective_hamiltonian_1d():
    model = pendulum(1.0)
    crit = critical_momentum_1d(model)
    assert crit == pytest.approx(2 / np.pi**2, rel=1e-10)
    assert effective_hamiltonian_1d(model, 0.5 * crit) == pytest.approx(0.0, abs=1e-15)
    assert effective_hamiltonian_1d(model, 0.5) == pytest.approx(0.1003134, abs=1e-7)
    # large momenta average the potential out: H ~ P^2/2 - mean V
    assert effective_hamiltonian_1d(model, 5.0) == pytest.approx(12.5 - 1 / (4 * np.pi**2), abs=1e-4)
    assert effective_hamiltonian_1d(free_particle(), 0.7) == pytest.approx(0.245, rel=1e-10)


def test_karp_tracks_effective_hamiltonian():
    k, _ = make_kernel(pendulum(1.0), 0.1, 100, (0.5,))
    ebar = effective_action_karp(k)[0].effective_action
    assert abs(ebar / 0.1 + effective_hamiltonian_1d(pendulum(1.0), 0.5)) <= 1e-3


def test_export_reference(tmp_path):
    g = PeriodicGrid(1, 16)
    text = export_reference(pendulum_closed_form(1.0), g, tmp_path / "ref.csv")
    assert text.startswith("# provenance")
    f = from_csv(tmp_path / "ref.csv")
    assert np.array_equal(f.values, pendulum_closed_form(1.0).closed_form_u(g.coordinates[:, 0]))


def test_reference_discounted_free_particle():
    ref = reference_discounted_solution(free_particle(), (0.0,), 0.5, [0.2, 0.1, 0.05])
    assert np.all(ref.u.values == 0.0) and ref.error_estimate == 0.0


def test_reference_discounted_pendulum():
    model, delta = pendulum(1.0), 0.5
    ref = reference_discounted_solution(model, (0.0,), delta, [0.1, 0.05, 0.025])
    g1, g2 = ref.gaps
    assert g2 <= 0.5 * g1  # at least linear in tau
    assert ref.reliable
    du = delta * ref.finest.values
    vmin, vmax = model.potential_bounds()
    assert du.min() >= vmin - 1e-9 and du.max() <= vmax + 1e-9
    # warm starts change only the iteration count
    cold = reference_discounted_solution(model, (0.0,), delta, [0.1, 0.05, 0.025], warm_start=False)
    assert np.max(np.abs(cold.finest.values - ref.finest.values)) <= 2e-9


def _discounted_chain(model, tau, delta, c_h, start=0.4, steps=60):
    a = DiscreteAction(model, tau, (0.0,))
    g = PeriodicGrid.for_step(tau, 1, c_h)
    k = tabulate_kernel(a, g)
    u, _ = solve_discounted(k, delta, 1e-12)
    _, field = discounted_lax_oleinik(u, k, delta)
    return extract_calibrated_chain(u, field, g.node_of(start), steps, k, tau_delta=tau * delta), g


def test_el_residual_constant_chain():
    chain, _ = _discounted_chain(free_particle(), 0.1, 0.5, 1.0)
    assert discounted_el_residual(free_particle(), (0.0,), 0.1, 0.5, chain) == 0.0


@pytest.mark.parametrize("tau", [0.1, 0.05])
def test_el_residual_linear_in_tau_and_refines(tau):
    model, delta = pendulum(1.0), 0.5
    chain, _ = _discounted_chain(model, tau, delta, 1.0)
    r = discounted_el_residual(model, (0.0,), tau, delta, chain)
    assert r <= 1.0 * tau  # c = 1 locked from the h = tau^2 measurement (0.97)
    fine, _ = _discounted_chain(model, tau, delta, 0.5)
    assert discounted_el_residual(model, (0.0,), tau, delta, fine) < r


@pytest.mark.parametrize("tau", [0.1, 0.05, 0.025])
def test_chain_velocity_bounds(tau):
    model = pendulum(1.0)
    chain, g = _discounted_chain(model, tau, 0.5, 1.0)
    v = np.diff(chain.forward_positions()[:, 0]) / tau
    assert np.abs(v).max() <= 0.25  # C(R) locked: measured 0.2 for every tau
    # |v_n - v_{n-1}| <= c tau with c >= max|V'| = 1/(2 pi), plus one node of snapping
    assert np.abs(np.diff(v)).max() <= 0.2 * tau + g.spacing / tau + 1e-12
