import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_backward, brute_convolve, brute_discounted_series, brute_forward, dense_action
from conftest import make_kernel
from weakkam import (
    ActionKernel,
    DiscreteAction,
    GridFunction,
    PeriodicGrid,
    backward_lax_oleinik,
    discounted_lax_oleinik,
    estimate_bounds,
    forward_lax_oleinik,
    free_particle,
    min_plus_convolve,
    min_plus_power,
    pendulum,
    solve_discounted,
    sup_norm_diff,
    tabulate_kernel,
)
from weakkam.errors import GridMismatch, InvalidDiscount, WindowTooSmall
from weakkam.laxoleinik import identity_kernel, kernel_lookup, minimal_action_defect, window_offsets

ULP = 8 * np.spacing(2.0)
vals64 = arrays(float, 64, elements=st.floats(-1, 1))


def dense_from_kernel(kernel):
    n = kernel.grid.n
    A = np.full((n, n), np.inf)
    for k in range(kernel.n_offsets):
        A[np.arange(n), kernel.target_nodes(k)] = kernel.weights[:, k]
    return A


@pytest.fixture(scope="module")
def tiny():
    """Pendulum, n=8, tau=0.25: the window covers every node."""
    kernel, action = make_kernel(pendulum(1.0), 0.25, 8)
    assert kernel.n_offsets == 8
    return kernel, dense_action(action, kernel.grid)


def test_window_offsets_example():
    off = window_offsets(PeriodicGrid(1, 100), 0.1 * 2.0)
    assert off.shape == (41, 1)
    assert off[0, 0] == -20 and off[-1, 0] == 20


def test_window_is_lexicographically_sorted():
    off = window_offsets(PeriodicGrid(2, 20), 0.2)
    assert [tuple(o) for o in off] == sorted(tuple(o) for o in off)


def test_zero_offset_weights():
    fk, _ = make_kernel(free_particle(), 0.1, 100)
    assert np.all(fk.weights[:, fk.zero_index] == 0.0)
    pk, _ = make_kernel(pendulum(1.0), 0.1, 100)
    assert pk.weights[0, pk.zero_index] == 0.0


def test_window_too_small():
    a = DiscreteAction(free_particle(), 0.01, (0.0,))
    with pytest.raises(WindowTooSmall):
        tabulate_kernel(a, PeriodicGrid(1, 8), estimate_bounds(a))


def test_tabulation_matches_scalar_evaluation(tiny):
    kernel, A = tiny
    # separable tabulation vs scalar evaluation differ only by rounding
    assert np.max(np.abs(dense_from_kernel(kernel) - A)) <= 1e-15


def test_free_particle_backward_zero():
    k, _ = make_kernel(free_particle(), 0.1, 64)
    out, field = backward_lax_oleinik(GridFunction.constant(k.grid), k)
    assert np.all(out.values == 0.0) and np.all(field.best_offset == 0)
    out, _ = forward_lax_oleinik(GridFunction.constant(k.grid), k)
    assert np.all(out.values == 0.0)


def test_constant_passes_through(pend64):
    c = 1.75
    out, _ = backward_lax_oleinik(GridFunction.constant(pend64.grid, c), pend64)
    expect = c + np.min(pend64.incoming, axis=1)
    assert np.array_equal(out.values, expect)


def test_backward_matches_brute_force(tiny, rng):
    kernel, A = tiny
    u = np.cos(2 * np.pi * kernel.grid.coordinates[:, 0])
    out, _ = backward_lax_oleinik(GridFunction(kernel.grid, u), kernel)
    assert np.max(np.abs(out.values - brute_backward(u, A))) <= 1e-14
    for _ in range(20):
        u = rng.normal(size=8)
        out, _ = backward_lax_oleinik(GridFunction(kernel.grid, u), kernel)
        assert np.max(np.abs(out.values - brute_backward(u, A))) <= 1e-14


def test_forward_matches_brute_force(tiny, rng):
    kernel, A = tiny
    for _ in range(20):
        u = rng.normal(size=8)
        out, _ = forward_lax_oleinik(GridFunction(kernel.grid, u), kernel)
        assert np.max(np.abs(out.values - brute_forward(u, A))) <= 1e-14


def test_argmin_ties_take_first_offset():
    g = PeriodicGrid(1, 8)
    offsets = np.array([[-1], [0], [1]])
    k = ActionKernel(g, 0.5, 0.2, offsets, np.zeros((8, 3)))
    _, field = backward_lax_oleinik(GridFunction.constant(g), k)
    assert np.all(field.best_offset == -1)
    assert np.array_equal(field.predecessors(), (np.arange(8) + 1) % 8)


@given(vals64, arrays(float, 64, elements=st.floats(0, 1)), st.floats(-10, 10))
def test_operator_laws(pend64, a, bump, c):
    g = pend64.grid
    u, v = GridFunction(g, a), GridFunction(g, a + bump)
    Tu, _ = backward_lax_oleinik(u, pend64)
    Tv, _ = backward_lax_oleinik(v, pend64)
    assert np.all(Tu.values <= Tv.values)
    # exact in real arithmetic; the sums u + E round, so allow a few ulps
    assert sup_norm_diff(Tu, Tv) <= sup_norm_diff(u, v) + ULP
    Tuc, _ = backward_lax_oleinik(u + c, pend64)
    assert np.max(np.abs(Tuc.values - Tu.values - c)) <= 1e-12 * (1 + abs(c))
    w = GridFunction(g, np.minimum(a, a[::-1] + 0.1))
    Tw, _ = backward_lax_oleinik(w, pend64)
    Tr, _ = backward_lax_oleinik(GridFunction(g, a[::-1] + 0.1), pend64)
    assert np.array_equal(Tw.values, np.minimum(Tu.values, Tr.values))


def test_discounted_free_particle_and_constants(pend64):
    fk, _ = make_kernel(free_particle(), 0.1, 64)
    out, _ = discounted_lax_oleinik(GridFunction.constant(fk.grid), fk, 0.5)
    assert np.all(out.values == 0.0)
    c, delta = 2.0, 0.5
    out, _ = discounted_lax_oleinik(GridFunction.constant(pend64.grid, c), pend64, delta)
    assert np.allclose(out.values, (1 - 0.1 * delta) * c + np.min(pend64.incoming, axis=1), atol=1e-15)
    with pytest.raises(InvalidDiscount):
        discounted_lax_oleinik(GridFunction.constant(pend64.grid), pend64, 10.0)


@given(vals64, vals64, st.sampled_from([0.5, 0.1]))
def test_discounted_contraction(pend64, a, b, delta):
    u, v = GridFunction(pend64.grid, a), GridFunction(pend64.grid, b)
    Tu, _ = discounted_lax_oleinik(u, pend64, delta)
    Tv, _ = discounted_lax_oleinik(v, pend64, delta)
    assert sup_norm_diff(Tu, Tv) <= (1 - 0.1 * delta) * sup_norm_diff(u, v) + ULP


def test_discounted_matches_series(tiny):
    kernel, A = tiny
    delta = 0.5
    beta = 1 - kernel.tau * delta
    # truncated tail is beta^depth * max|E| / (tau delta)
    depth = int(np.ceil(np.log(1e-11 * kernel.tau * delta / np.abs(A).max()) / np.log(beta)))
    u, _ = solve_discounted(kernel, delta, tol=1e-12)
    assert np.max(np.abs(u.values - brute_discounted_series(A, beta, depth))) <= 1e-8


def test_discounted_argmin_offsets_inside_window(pend64):
    jumps = []
    for delta in [0.4, 0.2, 0.1, 0.05]:
        u, _ = solve_discounted(pend64, delta)
        _, field = discounted_lax_oleinik(u, pend64, delta)
        jump = np.abs(field.best_offset[:, 0]) * pend64.grid.spacing
        assert np.all(jump <= pend64.radius + 1e-12)
        jumps.append(jump.max() / pend64.tau)
    # node snapping can add one grid step; beyond that the bound must not grow
    step = pend64.grid.spacing / pend64.tau
    assert max(jumps) <= jumps[0] + step + 1e-12
    assert jumps[-1] <= jumps[1] + 1e-12


def test_convolve_identity(pend64):
    out = min_plus_convolve(pend64, identity_kernel(pend64.grid))
    assert np.array_equal(out.offsets, pend64.offsets)
    assert np.array_equal(out.weights, pend64.weights)


def test_convolve_free_particle_straight_lines():
    k, _ = make_kernel(free_particle(), 0.1, 100)
    kk = min_plus_convolve(k, k)
    h, tau = k.grid.spacing, k.tau
    for o in range(-20, 21, 2):
        col = kernel_lookup(kk, [[o]])[0]
        # two steps of o/2 nodes each: kinetic action of a straight line over time 2 tau
        assert np.allclose(kk.weights[:, col], 0.5 * (o * h) ** 2 / (2 * tau), atol=1e-15)


def test_convolve_matches_brute_force(tiny):
    kernel, A = tiny
    out = min_plus_convolve(kernel, kernel)
    assert np.max(np.abs(dense_from_kernel(out) - brute_convolve(A, A))) <= 1e-14


def test_convolve_associative_exhaustive(rng):
    g = PeriodicGrid(1, 6)
    offs = np.arange(-2, 4)[:, None]
    ks = [ActionKernel(g, 0.1, 0.5, offs, rng.integers(0, 64, (6, 6)) / 8.0) for _ in range(3)]
    left = min_plus_convolve(min_plus_convolve(ks[0], ks[1]), ks[2])
    right = min_plus_convolve(ks[0], min_plus_convolve(ks[1], ks[2]))
    assert np.array_equal(dense_from_kernel(left), dense_from_kernel(right))


def test_convolve_grid_mismatch(pend64):
    other, _ = make_kernel(pendulum(1.0), 0.1, 32)
    with pytest.raises(GridMismatch):
        min_plus_convolve(pend64, other)


def test_power_one_is_tabulation(pend64):
    a = DiscreteAction(pendulum(1.0), 0.1, (0.0,))
    p1 = min_plus_power(a, pend64.grid, 1)
    assert np.array_equal(p1.weights, pend64.weights)


@pytest.mark.parametrize("N", [2, 4, 8])
def test_power_free_particle_up_to_snapping(N):
    tau, g = 0.2, PeriodicGrid(1, 200)
    a = DiscreteAction(free_particle(), tau, (0.0,))
    P = min_plus_power(a, g, N)
    h = g.spacing
    exact = 0.5 * (P.offsets[:, 0] * h) ** 2 / tau
    # splitting o nodes into N integer steps costs h^2 r (N - r) / (2 tau) extra, r = o mod N
    r = np.mod(P.offsets[:, 0], N)
    assert np.allclose(P.weights, exact + h * h * r * (N - r) / (2 * tau), atol=1e-14)


def test_comparison_estimate_pendulum_frozen():
    # Prop-style bound |E^(16) - E_tau| <= C tau^2 on the a-priori window; C measured at 0.1528
    a = DiscreteAction(pendulum(1.0), 0.2, (0.0,))
    grid = PeriodicGrid.for_step(0.2, 1, 0.028, 1.5)
    defect = minimal_action_defect(a, grid, 16, estimate_bounds(a).raw_radius)
    assert defect <= 0.16 * 0.2**2


def test_semiconcavity_probe():
    # second differences of E^(N) in y are at most C h'^2 / tau plus the snapping kinks N^2 h^2 / (4 tau)
    C, N = 1.02, 16
    for tau in [0.2, 0.1]:
        a = DiscreteAction(pendulum(1.0), tau, (0.0,))
        g = PeriodicGrid.for_step(tau, 1, 0.028, 1.5)
        W = min_plus_power(a, g, N).weights
        h = g.spacing
        slack = N * N * h * h / (4 * tau)
        for k in [1, 2, 4, 8, 16, 32]:
            sd = W[:, 2 * k:] + W[:, :-2 * k] - 2 * W[:, k:-k]
            assert sd.max() <= C * (k * h) ** 2 / tau + slack
