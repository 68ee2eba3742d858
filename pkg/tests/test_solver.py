from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stabctl.analysis import l1_growth, max_principle_margin, norm_l1, observed_orders
from stabctl.errors import BlowUpError, DomainError
from stabctl.flux import burgers_flux, quartic_flux, zero_flux
from stabctl.grid import make_bump, make_grid
from stabctl.solver import (
    Forcing,
    SolverConfig,
    barrier_constant,
    barrier_lower,
    barrier_upper,
    coefficient_field,
    solve,
    solve_linearised,
    step_linearised,
    step_nonlinear,
    sup_bound,
)
from stabctl.verify import mms_space_errors, random_coefficient


def sin_field(g, m=1):
    return g.sample(lambda x: np.sin(m * np.pi * x))


def zero_a(g):
    return lambda t, w: np.zeros(g.n + 2)


# {{{ nonlinear steps


def test_zero_state_is_fixed_point():
    g = make_grid(0.0, 1.0, 20)
    cfg = SolverConfig(nu=0.1, dt=0.01)
    out = step_nonlinear(g.zeros(), 0.0, cfg, burgers_flux(), g, Forcing.zero())
    assert np.all(out == 0.0)


def test_heat_exact_solution():
    g = make_grid(0.0, 1.0, 99)
    cfg = SolverConfig(nu=1.0, dt=1e-4)
    u = solve(sin_field(g), (0.0, 0.1), cfg, zero_flux(), g).final
    T = 0.1
    exact = math.exp(-math.pi**2 * T) * sin_field(g)
    # leading error terms: backward Euler pi^4 T e^{-pi^2 T} dt / 2, centred Laplacian pi^4 T h^2 / 12
    bound = math.pi**4 * T * (math.exp(-math.pi**2 * T) * cfg.dt / 2 + g.h**2 / 12)
    err = np.max(np.abs(u - exact))
    assert err <= 1.1 * bound


def test_mms_burgers_error_vanishes_under_refinement():
    hs, errs = mms_space_errors(ns=(19, 39, 79))
    assert np.all(np.diff(errs) < 0)
    assert errs[-1] < 1e-3
    assert np.min(observed_orders(hs, errs)) >= 1.8


def test_mms_burgers_upwind_is_first_order_in_space():
    hs, errs = mms_space_errors(ns=(39, 79, 159), flux_treatment="explicit_upwind")
    orders = observed_orders(hs, errs)
    assert np.all(orders > 0.8)


def test_empty_window():
    g = make_grid(0.0, 1.0, 10)
    u0 = sin_field(g)
    tr = solve(u0, (0.3, 0.3), SolverConfig(nu=0.1, dt=0.01), burgers_flux(), g)
    assert tr.times.tolist() == [0.3]
    np.testing.assert_array_equal(tr.states[0], u0)


@pytest.mark.parametrize("diffusion", ["implicit_backward_euler", "crank_nicolson"])
@pytest.mark.parametrize("flux_treatment", ["explicit_upwind", "explicit_central"])
def test_concatenation_is_bit_identical(diffusion, flux_treatment):
    g = make_grid(0.0, 1.0, 60)
    cfg = SolverConfig(nu=0.05, dt=0.0025, flux_treatment=flux_treatment, diffusion_treatment=diffusion)
    shape = make_bump(g, 0.4, 0.6)
    u0 = 0.7 * sin_field(g) + 0.2 * sin_field(g, 3)
    forcing = Forcing.function(lambda t, x: np.sin(np.pi * x))
    whole = solve(u0, (0.0, 1.0), cfg, burgers_flux(), g, forcing, (1.5, shape))
    first = solve(u0, (0.0, 0.5), cfg, burgers_flux(), g, forcing, (1.5, shape))
    second = solve(first.final, (0.5, 1.0), cfg, burgers_flux(), g, forcing, (1.5, shape))
    joined = first.extend(second)
    np.testing.assert_allclose(joined.times, whole.times, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(joined.states, whole.states)


def test_time_grid_contains_breakpoints():
    g = make_grid(0.0, 1.0, 30)
    cfg = SolverConfig(nu=0.1, dt=0.1)

    def signal(t):
        return 2.0 if 0.33 <= t < 0.4567 else 0.0

    signal.breakpoints = (0.33, 0.4567)
    forcing = Forcing.function(lambda t, x: 0.0 * x, breakpoints=(0.71,))
    tr = solve(sin_field(g), (0.0, 1.0), cfg, burgers_flux(), g, forcing, (signal, make_bump(g, 0.3, 0.7)))
    for b in (0.33, 0.4567, 0.71, 1.0):
        assert b in tr.times.tolist()
    assert np.all(np.diff(tr.times) > 0)
    assert np.max(np.diff(tr.times)) <= cfg.dt + 1e-15


def test_cfl_halving_records_substeps():
    g = make_grid(0.0, 1.0, 50)
    cfg = SolverConfig(nu=0.01, dt=0.05)
    tr = solve(5.0 * sin_field(g), (0.0, 0.1), cfg, burgers_flux(), g)
    steps = np.diff(tr.times)
    assert tr.times[-1] == 0.1
    assert steps.min() < cfg.dt
    speeds = np.abs(tr.states[:-1]).max(axis=1)
    assert np.all(steps * speeds / g.h <= cfg.cfl + 1e-12)


def test_blow_up_reports_time():
    g = make_grid(0.0, 1.0, 20)
    cfg = SolverConfig(nu=0.1, dt=0.01)
    forcing = Forcing.function(lambda t, x: 1e10 * np.ones_like(x))
    with pytest.raises(BlowUpError) as info:
        solve(g.zeros(), (0.0, 1.0), cfg, zero_flux(), g, forcing)
    assert info.value.time == pytest.approx(0.01)


def test_rejects_non_dirichlet_data():
    g = make_grid(0.0, 1.0, 10)
    with pytest.raises(DomainError):
        solve(np.ones(12), (0.0, 1.0), SolverConfig(nu=0.1, dt=0.01), burgers_flux(), g)


def test_solver_config_validation():
    with pytest.raises(DomainError):
        SolverConfig(nu=0.0, dt=0.1)
    with pytest.raises(DomainError):
        SolverConfig(nu=0.1, dt=0.1, flux_treatment="weno")


def test_tabulated_forcing():
    f = Forcing.tabulated([0.0, 0.5], [0.0, 1.0], [[0.0, 2.0], [1.0, 1.0]])
    np.testing.assert_allclose(f.eval(0.2, np.array([0.0, 0.25, 1.0])), [0.0, 0.5, 2.0])
    np.testing.assert_allclose(f.eval(0.7, np.array([0.3])), [1.0])
    assert f.breakpoints == (0.5,)


def test_forcing_breakpoints_must_increase():
    with pytest.raises(DomainError):
        Forcing.function(lambda t, x: x, breakpoints=(0.5, 0.2))


def test_determinism():
    g = make_grid(0.0, 1.0, 80)
    cfg = SolverConfig(nu=0.02, dt=0.004, diffusion_treatment="crank_nicolson")
    u0 = sin_field(g) - 0.4 * sin_field(g, 2)
    a = solve(u0, (0.0, 0.7), cfg, quartic_flux(), g)
    b = solve(u0, (0.0, 0.7), cfg, quartic_flux(), g)
    assert a.states.tobytes() == b.states.tobytes()


# }}}


# {{{ linearised steps


@pytest.mark.parametrize("diffusion", ["implicit_backward_euler", "crank_nicolson"])
@pytest.mark.parametrize("flux_treatment", ["explicit_upwind", "explicit_central"])
def test_linearised_with_zero_coefficient_is_heat_step(diffusion, flux_treatment):
    g = make_grid(0.0, 1.0, 40)
    cfg = SolverConfig(nu=0.3, dt=0.01, flux_treatment=flux_treatment, diffusion_treatment=diffusion)
    w = sin_field(g) + 0.3 * sin_field(g, 4)
    lin = step_linearised(w, 0.0, cfg, np.zeros(g.n + 2), g)
    non = step_nonlinear(w, 0.0, cfg, zero_flux(), g)
    np.testing.assert_array_equal(lin, non)


def test_linearisation_matches_nonlinear_difference_central():
    g = make_grid(0.0, 1.0, 100)
    cfg = SolverConfig(nu=0.05, dt=0.002, flux_treatment="explicit_central")
    uh = 0.3 * sin_field(g)
    u = uh + 0.5 * sin_field(g, 2)
    w = u - uh
    a = coefficient_field(burgers_flux(), uh, w)
    lin = step_linearised(w, 0.0, cfg, a, g)
    diff = step_nonlinear(u, 0.0, cfg, burgers_flux(), g) - step_nonlinear(uh, 0.0, cfg, burgers_flux(), g)
    # A(u) - A(uhat) = a w exactly for a quadratic flux, so one step agrees to roundoff
    assert np.max(np.abs(lin - diff)) <= 1e-14


def test_linearisation_tracks_nonlinear_difference_over_a_window():
    g = make_grid(0.0, 1.0, 100)
    flux = burgers_flux()
    cfg = SolverConfig(nu=0.1, dt=0.001, flux_treatment="explicit_central")
    uh0 = 0.3 * sin_field(g)
    u0 = uh0 + 0.5 * sin_field(g, 2)
    u = solve(u0, (0.0, 0.5), cfg, flux, g)
    uh = solve(uh0, (0.0, 0.5), cfg, flux, g)

    def a_fn(t, w):
        return coefficient_field(flux, uh.at(t), w)

    w = solve_linearised(u0 - uh0, (0.0, 0.5), cfg, a_fn, g)
    assert np.max(np.abs(w.final - (u.final - uh.final))) <= 1e-12


def test_coefficient_field_quadrature_is_exact_for_cubic_derivative():
    flux = quartic_flux()
    uh = np.linspace(-2.0, 2.0, 9)
    w = np.linspace(1.0, -3.0, 9) + 0.1
    a = coefficient_field(flux, uh, w)
    secant = (flux.A(uh + w) - flux.A(uh)) / w
    np.testing.assert_allclose(a, secant, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("flux_treatment, min_order", [("explicit_upwind", 0.8), ("explicit_central", 1.8)])
def test_constant_coefficient_self_convergence(flux_treatment, min_order):
    T = 0.05

    def run(n):
        g = make_grid(0.0, 1.0, n)
        cfg = SolverConfig(nu=0.1, dt=1e-5, flux_treatment=flux_treatment, diffusion_treatment="crank_nicolson")
        return g, solve_linearised(sin_field(g), (0.0, T), cfg, lambda t, w: np.ones(g.n + 2), g).final

    ref_g, ref = run(399)
    errs, hs = [], []
    for n in (49, 99):
        g, w = run(n)
        stride = (ref_g.n + 1) // (g.n + 1)
        errs.append(np.max(np.abs(w - ref[::stride])))
        hs.append(g.h)
    assert observed_orders(hs, errs)[0] >= min_order


@given(seed=st.integers(0, 10_000))
def test_linearised_l1_contraction_random_coefficients(seed):
    rng = np.random.default_rng(seed)
    g = make_grid(0.0, 1.0, 60)
    cfg = SolverConfig(nu=0.05, dt=0.005)
    a = random_coefficient(g, rng, scale=2.0)
    w0 = g.sample(lambda x: rng.normal() * np.sin(np.pi * x) + rng.normal() * np.sin(3 * np.pi * x))
    tr = solve_linearised(w0, (0.0, 0.3), cfg, a, g)
    assert l1_growth(tr) <= 1e-10


@given(c=st.floats(-3.0, 3.0))
def test_linearised_l1_contraction_constant_coefficient(c):
    g = make_grid(0.0, 1.0, 50)
    cfg = SolverConfig(nu=0.02, dt=0.01)
    tr = solve_linearised(sin_field(g) - 0.5 * sin_field(g, 2), (0.0, 0.3), cfg, lambda t, w: np.full(g.n + 2, c), g)
    assert l1_growth(tr) <= 1e-10


@given(seed=st.integers(0, 10_000))
def test_positivity_preservation(seed):
    rng = np.random.default_rng(seed)
    g = make_grid(0.0, 1.0, 60)
    cfg = SolverConfig(nu=0.05, dt=0.005)
    a = random_coefficient(g, rng, scale=2.0)
    w0 = g.sample(lambda x: np.abs(np.sin(np.pi * x) + rng.normal() * np.sin(4 * np.pi * x)))
    tr = solve_linearised(w0, (0.0, 0.3), cfg, a, g)
    assert tr.states.min() >= -1e-12


@given(amp=st.floats(-3.0, 3.0), xi=st.floats(-20.0, 20.0), m=st.integers(1, 6))
def test_maximum_principle_property(amp, xi, m):
    g = make_grid(0.0, 1.0, 60)
    cfg = SolverConfig(nu=0.05, dt=0.005)
    forcing = Forcing.function(lambda t, x: np.sin(5 * t) * np.sin(np.pi * x))
    tr = solve(amp * sin_field(g, m), (0.0, 0.3), cfg, burgers_flux(), g, forcing, (xi, make_bump(g, 0.2, 0.5)))
    assert max_principle_margin(tr) >= -1e-8


def test_l1_norm_of_difference_never_increases_for_burgers():
    g = make_grid(0.0, 1.0, 100)
    cfg = SolverConfig(nu=0.05, dt=0.002)
    a = solve(0.8 * sin_field(g) - 0.3 * sin_field(g, 3), (0.0, 1.0), cfg, burgers_flux(), g)
    b = solve(0.2 * sin_field(g, 2), (0.0, 1.0), cfg, burgers_flux(), g)
    d = [norm_l1(x - y, g) for x, y in zip(a.states, b.states)]
    assert np.all(np.diff(d) <= 1e-12 * d[0])


# }}}


# {{{ barriers


def test_barrier_constant_formula():
    assert barrier_constant(0.1, 1.0, 1.0, 1.0, 0.0) == 2.2
    assert barrier_constant(0.1, 1.0, 0.5, 1.0, 0.0) == 4.0
    assert barrier_constant(0.0, 2.0, 1.0, 1.0, 10.0) == 20.0


def test_barrier_initial_value_dominates_data():
    g = make_grid(0.0, 1.0, 50)
    L = 0.7
    up = barrier_upper(g, 0.0, 0.01, L, 1.0, 1.0, 1.0, 0.0)
    lo = barrier_lower(g, 0.0, 0.01, L, 1.0, 1.0, 1.0, 0.0)
    assert up.min() >= L and lo.max() <= -L


def test_barrier_decays_in_time():
    g = make_grid(0.0, 1.0, 50)
    vals = [barrier_upper(g, t, 0.1, 1.0, 1.0, 1.0, 1.0, 0.0).max() for t in (1.0, 10.0, 1e6)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-4


def test_barrier_at_T_bounded_by_limit_form():
    g = make_grid(0.0, 1.0, 50)
    eps, L, T = 0.01, 1.0, 1.0
    B0 = barrier_constant(0.0, T, 1.0, 1.0, 0.0)
    up = barrier_upper(g, T, eps, L, T, 1.0, 1.0, 0.0)
    assert up.max() <= B0 * (B0 + 1.0) / T + L * eps / (T + eps) + 1e-12 * up.max() + (
        barrier_constant(eps, T, 1.0, 1.0, 0.0) - B0
    ) * 10.0
    assert sup_bound(g, T, 1.0, 1.0, 0.0) == pytest.approx(B0 * (B0 + 1.0) / T)


@pytest.mark.parametrize("eps", [0.1, 0.01])
def test_barriers_dominate_burgers(eps):
    g = make_grid(0.0, 1.0, 200)
    cfg = SolverConfig(nu=0.1, dt=0.0025)
    u0 = 0.5 * sin_field(g)
    u = solve(u0, (0.0, 1.0), cfg, burgers_flux(), g).final
    up = barrier_upper(g, 1.0, eps, 0.5, 1.0, 1.0, 1.0, 0.0)
    lo = barrier_lower(g, 1.0, eps, 0.5, 1.0, 1.0, 1.0, 0.0)
    assert np.all(up >= u) and np.all(lo <= u)


def test_barrier_rejects_bad_eps():
    g = make_grid(0.0, 1.0, 10)
    with pytest.raises(DomainError):
        barrier_upper(g, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        barrier_lower(g, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 0.0)


# }}}
