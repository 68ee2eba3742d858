"""Named verification suites and convergence studies.

Every suite returns rows ``(case, margin, tolerance, passed)``.  What
``margin`` measures depends on the suite:

=============  =====================================================  ==============
suite          margin                                                 passes when
=============  =====================================================  ==============
contraction    worst relative one-step L1 growth                      margin <= tol
maximum        min of (bound - sup norm) over the time grid           margin >= -tol
comparison     min of barrier minus solution (upper and lower)        margin >= 0
harnack        relative error vs separable oracle, or ratio itself    error <= tol / finite
gns            log-margin of the interpolation inequality             finite / <= tol
convergence    observed order                                         order >= tol
dichotomy      deviation from the separable oracle / neither count    margin <= tol
=============  =====================================================  ==============
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from stabctl.analysis import (
    barrier_margins,
    check_gns,
    harnack_ratio,
    l1_growth,
    max_principle_margin,
    norm_l1,
    observed_orders,
)
from stabctl.flux import burgers_flux, zero_flux
from stabctl.grid import Grid, make_grid
from stabctl.solver import Forcing, SolverConfig, solve, solve_linearised
from stabctl.stabiliser import (
    NEITHER,
    StabiliserParams,
    dichotomy_test,
    random_perturbation,
    stabilise,
)

SUITES = ("contraction", "maximum", "comparison", "harnack", "gns", "convergence", "dichotomy")


@dataclass(frozen=True)
class Row:
    case: str
    margin: float
    tolerance: float
    passed: bool


# {{{ convergence studies


def _sin(grid: Grid, m: int = 1) -> np.ndarray:
    return grid.sample(lambda x: np.sin(m * np.pi * x))


def heat_space_errors(ns=(19, 39, 79, 159), T: float = 0.1, nu: float = 1.0, dt: float = 1.0e-4):
    """Max-norm error against ``exp(-nu pi^2 t) sin(pi x)``, Crank-Nicolson with a tiny step."""
    hs, errs = [], []
    for n in ns:
        g = make_grid(0.0, 1.0, n)
        cfg = SolverConfig(nu=nu, dt=dt, diffusion_treatment="crank_nicolson")
        u = solve(_sin(g), (0.0, T), cfg, zero_flux(), g).final
        hs.append(g.h)
        errs.append(float(np.max(np.abs(u - math.exp(-nu * math.pi**2 * T) * _sin(g)))))
    return np.array(hs), np.array(errs)


def heat_time_errors(
    diffusion: str, dts=(0.02, 0.01, 0.005, 0.0025), n: int = 99, T: float = 0.5, nu: float = 1.0
):
    """Time-discretisation error against the exact solution of the space-discrete system.

    ``sin(pi x)`` is an exact eigenvector of the discrete Laplacian, so the
    semi-discrete solution is ``exp(nu lambda_h t) sin(pi x)`` with
    ``lambda_h = -4 sin^2(pi h / 2) / h^2``.
    """
    g = make_grid(0.0, 1.0, n)
    lam = -4.0 * math.sin(math.pi * g.h / 2) ** 2 / g.h**2
    exact = math.exp(nu * lam * T) * _sin(g)
    errs = []
    for dt in dts:
        cfg = SolverConfig(nu=nu, dt=dt, diffusion_treatment=diffusion)
        u = solve(_sin(g), (0.0, T), cfg, zero_flux(), g).final
        errs.append(float(np.max(np.abs(u - exact))))
    return np.array(dts), np.array(errs)


def mms_exact(t, x):
    return math.exp(-t) * np.sin(np.pi * x)


def mms_forcing(nu: float) -> Forcing:
    """Source making ``u* = exp(-t) sin(pi x)`` solve viscous Burgers."""

    def h(t, x):
        s, c = np.sin(np.pi * x), np.cos(np.pi * x)
        return (nu * np.pi**2 - 1.0) * math.exp(-t) * s + np.pi * math.exp(-2 * t) * s * c

    return Forcing.function(h)


def mms_space_errors(ns=(19, 39, 79, 159), T: float = 0.5, nu: float = 0.1, dt: float = 5.0e-4,
                     flux_treatment: str = "explicit_central"):
    hs, errs = [], []
    for n in ns:
        g = make_grid(0.0, 1.0, n)
        cfg = SolverConfig(nu=nu, dt=dt, flux_treatment=flux_treatment, diffusion_treatment="crank_nicolson")
        u = solve(g.sample(lambda x: mms_exact(0.0, x)), (0.0, T), cfg, burgers_flux(), g, mms_forcing(nu)).final
        hs.append(g.h)
        errs.append(float(np.max(np.abs(u - g.sample(lambda x: mms_exact(T, x))))))
    return np.array(hs), np.array(errs)


def mms_time_errors(diffusion: str, dts=(0.004, 0.002, 0.001, 0.0005, 0.00025), n: int = 199,
                    T: float = 0.5, nu: float = 0.1, flux_treatment: str = "explicit_central"):
    """Self-convergence in time on a fixed grid: ``e_i = |u_{dt_i} - u_{dt_{i+1}}|_inf``.

    Returns ``(dts[:-1], e)``; the spatial error cancels in the differences.
    """
    g = make_grid(0.0, 1.0, n)
    sols = []
    for dt in dts:
        cfg = SolverConfig(nu=nu, dt=dt, flux_treatment=flux_treatment, diffusion_treatment=diffusion)
        sols.append(solve(g.sample(lambda x: mms_exact(0.0, x)), (0.0, T), cfg, burgers_flux(), g, mms_forcing(nu)).final)
    errs = [float(np.max(np.abs(a - b))) for a, b in zip(sols[:-1], sols[1:])]
    return np.array(dts[:-1]), np.array(errs)


def _min_order(sizes, errs) -> float:
    return float(np.min(observed_orders(sizes, errs)))


def suite_convergence() -> list[Row]:
    rows = []
    rows.append(Row("heat_space_order", _min_order(*heat_space_errors()), 1.8, False))
    rows.append(Row("heat_time_order_backward_euler", _min_order(*heat_time_errors("implicit_backward_euler")), 0.9, False))
    rows.append(Row("heat_time_order_crank_nicolson", _min_order(*heat_time_errors("crank_nicolson")), 1.8, False))
    rows.append(Row("mms_burgers_space_order", _min_order(*mms_space_errors()), 1.8, False))
    rows.append(Row("mms_burgers_time_order_backward_euler", _min_order(*mms_time_errors("implicit_backward_euler")), 0.9, False))
    rows.append(Row("mms_burgers_time_order_crank_nicolson", _min_order(*mms_time_errors("crank_nicolson")), 1.8, False))
    return [Row(r.case, r.margin, r.tolerance, r.margin >= r.tolerance) for r in rows]


# }}}


# {{{ principle suites


def random_coefficient(grid: Grid, rng: np.random.Generator, modes: int = 4, scale: float = 1.0) -> Callable:
    """Smooth random ``a(t, x) = sum_m (alpha_m + beta_m sin(omega_m t)) cos(m pi x)``."""
    alpha = rng.normal(0.0, scale, modes + 1)
    beta = rng.normal(0.0, scale, modes + 1)
    omega = rng.uniform(0.5, 10.0, modes + 1)
    xi = (np.asarray(grid.x) - grid.a) / grid.length
    basis = np.array([np.cos(m * np.pi * xi) for m in range(modes + 1)])

    def a(t, w=None):
        return (alpha + beta * np.sin(omega * t)) @ basis

    return a


def suite_contraction(cases: int = 10, seed: int = 0) -> list[Row]:
    rows = []
    rng = np.random.default_rng(seed)
    g = make_grid(0.0, 1.0, 200)
    cfg = SolverConfig(nu=0.05, dt=0.002)
    for i in range(cases):
        a = random_coefficient(g, rng)
        w0 = random_perturbation(g, rng, amplitude=1.0)
        tr = solve_linearised(w0, (0.0, 1.0), cfg, a, g)
        rows.append(Row(f"linearised_random_a_{i}", l1_growth(tr), 1e-10, False))
    for c in (1.0, -0.7, 0.0):
        tr = solve_linearised(_sin(g) + 0.3 * _sin(g, 3), (0.0, 1.0), cfg, lambda t, w, c=c: np.full(g.n + 2, c), g)
        rows.append(Row(f"linearised_constant_a_{c:+.1f}", l1_growth(tr), 1e-10, False))
    # uncontrolled Burgers pair: distance across unit windows
    g4 = make_grid(0.0, 1.0, 400)
    bcfg = SolverConfig(nu=0.1, dt=0.0025)
    uh0 = 0.3 * _sin(g4)
    u0 = uh0 + 0.5 * _sin(g4, 2)
    a = solve(u0, (0.0, 5.0), bcfg, burgers_flux(), g4)
    b = solve(uh0, (0.0, 5.0), bcfg, burgers_flux(), g4)
    d = np.array([norm_l1(a.at(k) - b.at(k), g4) for k in range(6)])
    rows.append(Row("burgers_uncontrolled_unit_windows", float(np.max((d[1:] - d[:-1]) / d[:-1])), 1e-8, False))
    d_all = g4.h * np.abs(a.states - b.states).sum(axis=1)
    rows.append(Row("burgers_uncontrolled_every_step", float(np.max((d_all[1:] - d_all[:-1]) / d_all[:-1])), 1e-10, False))
    return [Row(r.case, r.margin, r.tolerance, r.margin <= r.tolerance) for r in rows]


def suite_maximum(tol: float = 1e-8) -> list[Row]:
    from stabctl.harness import shipped_config, shipped_scenarios, resolve_params

    rows = []
    for name in sorted(shipped_scenarios()):
        cfg = shipped_config(name)
        sc = cfg.scenario
        for label, init in (("u0", cfg.u0), ("uhat0", cfg.uhat0)):
            tr = solve(init, (0.0, 2.0), sc.cfg, sc.flux, sc.grid, sc.forcing)
            rows.append(Row(f"{name}_{label}_uncontrolled", max_principle_margin(tr), tol, False))
        params, _ = resolve_params(cfg)
        res = stabilise(cfg.u0, cfg.uhat0, 3, sc, params)
        if res.u is not None:
            rows.append(Row(f"{name}_controlled", max_principle_margin(res.u), tol, False))
    # an explicit strong pulse
    cfg = shipped_config("s1")
    sc = cfg.scenario
    tr = solve(cfg.u0, (0.0, 1.0), sc.cfg, sc.flux, sc.grid, sc.forcing, (lambda t: 40.0 if 0.5 <= t < 0.6 else 0.0, sc.shape))
    rows.append(Row("s1_forced_pulse_40", max_principle_margin(tr), tol, False))
    return [Row(r.case, r.margin, r.tolerance, r.margin >= -r.tolerance) for r in rows]


def suite_comparison(eps_values=(0.1, 0.01), T: float = 1.0) -> list[Row]:
    from stabctl.harness import shipped_config

    rows = []
    for name in ("s1", "s2", "s3", "s4"):
        cfg = shipped_config(name)
        sc = cfg.scenario
        g = sc.grid
        tr = solve(cfg.u0, (0.0, T), sc.cfg, sc.flux, g, sc.forcing)
        L = float(np.abs(cfg.u0).max())
        ts = np.linspace(0.0, T, 201)
        h_sup = max(float(np.abs(sc.forcing.eval(t, g.x)).max()) for t in ts)
        for eps in eps_values:
            up, lo = barrier_margins(tr.final, g, T, eps, L, sc.flux.sign_c, sc.flux.sign_C, h_sup)
            rows.append(Row(f"{name}_upper_eps{eps:g}", up, 0.0, up >= 0.0))
            rows.append(Row(f"{name}_lower_eps{eps:g}", lo, 0.0, lo >= 0.0))
    return rows


def harnack_heat_oracle(s: float, t: float, K=(0.25, 0.75), nu: float = 1.0) -> float:
    """Ratio for ``w = exp(-nu pi^2 t) sin(pi x)``: sup at s is at the centre, inf at t at the ends of K."""
    sup_k = 1.0 if K[0] <= 0.5 <= K[1] else max(math.sin(math.pi * K[0]), math.sin(math.pi * K[1]))
    inf_k = min(math.sin(math.pi * K[0]), math.sin(math.pi * K[1]))
    return math.exp(nu * math.pi**2 * (t - s)) * sup_k / inf_k


def suite_harnack(seed: int = 0) -> list[Row]:
    rows = []
    g = make_grid(0.0, 1.0, 199)
    cfg = SolverConfig(nu=1.0, dt=1e-4)
    tr = solve_linearised(_sin(g), (0.0, 0.5), cfg, lambda t, w: np.zeros(g.n + 2), g)
    ratio = harnack_ratio(tr, (0.25, 0.75), 0.25, 0.5)
    oracle = harnack_heat_oracle(0.25, 0.5)
    rows.append(Row("heat_sin_ratio_rel_error", abs(ratio - oracle) / oracle, 1e-2, abs(ratio - oracle) / oracle <= 1e-2))
    rng = np.random.default_rng(seed)
    cfg = SolverConfig(nu=0.1, dt=0.002)
    for i in range(5):
        a = random_coefficient(g, rng)
        w0 = np.abs(random_perturbation(g, rng, amplitude=1.0))
        tr = solve_linearised(w0, (0.0, 1.0), cfg, a, g)
        r = harnack_ratio(tr, (0.2, 0.8), 0.5, 1.0)
        rows.append(Row(f"random_positive_{i}_ratio", r, math.inf, math.isfinite(r) and r > 0))
    return rows


def suite_gns(sigma: float = 0.25, gamma: float = 0.5) -> list[Row]:
    g = make_grid(0.0, 1.0, 400)
    margins = [check_gns(_sin(g, m), g, sigma, gamma) for m in range(1, 11)]
    bound = max(margins)
    rows = [Row(f"sin_m{m}", mg, bound, math.isfinite(mg) and mg <= bound) for m, mg in enumerate(margins, 1)]
    f = _sin(g, 3) + 0.2 * _sin(g, 5)
    err = abs(check_gns(2.0 * f, g, sigma, gamma) - check_gns(f, g, sigma, gamma))
    rows.append(Row("scaling_invariance", err, 1e-12, err <= 1e-12))
    return rows


def dichotomy_heat_oracle(nu: float = 0.1, T: float = 0.5, pi=(0.4, 0.6)) -> tuple[float, float]:
    """``(l1_ratio, inf_on_pi)`` for heat flow of ``sin(pi x)`` on [0, 1]."""
    decay = math.exp(-nu * math.pi**2 * T)
    inf_sin = min(math.sin(math.pi * pi[0]), math.sin(math.pi * pi[1]))
    return decay, decay * inf_sin / (2.0 / math.pi)


def dichotomy_heat_probe(n: int = 399, dt: float = 1e-4, nu: float = 0.1, pi=(0.4, 0.6), q: float = 0.5, delta: float = 0.3):
    g = make_grid(0.0, 1.0, n)
    cfg = SolverConfig(nu=nu, dt=dt)
    w0 = _sin(g)
    w_half = solve_linearised(w0, (0.0, 0.5), cfg, lambda t, w: np.zeros(g.n + 2), g).final
    params = StabiliserParams(K=1.0, kappa=1.0, q=q, delta=delta)
    return dichotomy_test(w0, w_half, g, params, pi)


def suite_dichotomy(random_cases: int = 100, seed: int = 0) -> list[Row]:
    from stabctl.harness import shipped_config, resolve_params

    v = dichotomy_heat_probe()
    l1_o, inf_o = dichotomy_heat_oracle()
    rows = [
        Row("heat_probe_l1_ratio", abs(v.l1_ratio - l1_o), 1e-3, abs(v.l1_ratio - l1_o) <= 1e-3),
        Row("heat_probe_inf_on_pi", abs(v.inf_on_pi - inf_o), 1e-3, abs(v.inf_on_pi - inf_o) <= 1e-3),
        Row("heat_probe_branch_is_pulse", 0.0 if v.branch == "pulse" else 1.0, 0.0, v.branch == "pulse"),
    ]
    cfg = shipped_config("s1")
    sc = cfg.scenario
    params, _ = resolve_params(cfg)
    rng = np.random.default_rng(seed)
    uh_half = solve(cfg.uhat0, (0.0, 0.5), sc.cfg, sc.flux, sc.grid).final
    neither = 0
    for _ in range(random_cases):
        w0 = random_perturbation(sc.grid, rng)
        u_half = solve(cfg.uhat0 + w0, (0.0, 0.5), sc.cfg, sc.flux, sc.grid).final
        neither += dichotomy_test(w0, u_half - uh_half, sc.grid, params, sc.pi).branch == NEITHER
    rows.append(Row(f"s1_random_{random_cases}_neither_count", float(neither), 0.0, neither == 0))
    return rows


# }}}


def run_suite(name: str) -> list[Row]:
    suites = {
        "contraction": suite_contraction,
        "maximum": suite_maximum,
        "comparison": suite_comparison,
        "harnack": suite_harnack,
        "gns": suite_gns,
        "convergence": suite_convergence,
        "dichotomy": suite_dichotomy,
    }
    if name not in suites:
        raise KeyError(f"unknown suite {name!r}; known: {', '.join(SUITES)}")
    return suites[name]()
