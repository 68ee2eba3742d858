"""Stabilisation of one-dimensional viscous conservation laws by a piecewise-constant scalar control."""

from __future__ import annotations

from stabctl.analysis import (
    DecayFit,
    NormReport,
    check_gns,
    fit_decay,
    gns_theta,
    harnack_ratio,
    norm_c2sigma,
    norm_l1,
    norm_report,
    norm_sup,
)
from stabctl.errors import (
    BlowUpError,
    ConfigError,
    DomainError,
    FitError,
    FluxModelError,
    NumericalError,
    StabctlError,
)
from stabctl.flux import FluxModel, burgers_flux, check_sign_condition, get_flux, linear_flux, quartic_flux
from stabctl.grid import ControlShape, Grid, make_bump, make_grid, restrict_inf
from stabctl.solver import (
    Forcing,
    SolverConfig,
    Trajectory,
    barrier_lower,
    barrier_upper,
    solve,
    solve_linearised,
    step_linearised,
    step_nonlinear,
)
from stabctl.stabiliser import (
    ControlSchedule,
    DichotomyVerdict,
    Scenario,
    StabilisationResult,
    StabiliserParams,
    calibrate,
    dichotomy_test,
    plan_window,
    stabilise,
)

__version__ = "0.1.0"

__all__ = [
    "BlowUpError",
    "ConfigError",
    "ControlSchedule",
    "ControlShape",
    "DecayFit",
    "DichotomyVerdict",
    "DomainError",
    "FitError",
    "FluxModel",
    "FluxModelError",
    "Forcing",
    "Grid",
    "NormReport",
    "NumericalError",
    "Scenario",
    "SolverConfig",
    "StabctlError",
    "StabilisationResult",
    "StabiliserParams",
    "Trajectory",
    "barrier_lower",
    "barrier_upper",
    "burgers_flux",
    "calibrate",
    "check_gns",
    "check_sign_condition",
    "dichotomy_test",
    "fit_decay",
    "get_flux",
    "gns_theta",
    "harnack_ratio",
    "linear_flux",
    "make_bump",
    "make_grid",
    "norm_c2sigma",
    "norm_l1",
    "norm_report",
    "norm_sup",
    "plan_window",
    "quartic_flux",
    "restrict_inf",
    "solve",
    "solve_linearised",
    "stabilise",
    "step_linearised",
    "step_nonlinear",
]
