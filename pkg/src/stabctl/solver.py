"""IMEX finite-difference integration of

    u_t + A(u)_x - nu u_xx = h(t, x) + xi(t) phi(x),   u = 0 on the boundary,

its linearisation around a reference solution

    w_t - nu w_xx + (a w)_x = rhs,

and the explicit super/sub-solutions used to bound the sup norm.

Diffusion is implicit (backward Euler, or Crank-Nicolson paired with a Heun
predictor for the explicit part), the flux divergence and all sources are
explicit.  The default upwind/backward-Euler combination is monotone under
the CFL bound, which gives exact discrete maximum principle, positivity and
L1-contraction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from stabctl.errors import BlowUpError, DomainError, NumericalError
from stabctl.flux import FluxModel
from stabctl.grid import ControlShape, Grid

logger = logging.getLogger(__name__)

FLUX_TREATMENTS = ("explicit_upwind", "explicit_central")
DIFFUSION_TREATMENTS = ("implicit_backward_euler", "crank_nicolson")

BLOWUP_THRESHOLD = 1.0e6
# shortest segment we bother stepping over; shorter gaps between breakpoints are merged
_MIN_SEGMENT = 1.0e-13


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    dt: float
    flux_treatment: str = "explicit_upwind"
    diffusion_treatment: str = "implicit_backward_euler"
    cfl: float = 0.9
    max_halvings: int = 20

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError(f"viscosity must be positive, got {self.nu}")
        if not self.dt > 0:
            raise DomainError(f"time step must be positive, got {self.dt}")
        if self.flux_treatment not in FLUX_TREATMENTS:
            raise DomainError(f"flux_treatment must be one of {FLUX_TREATMENTS}")
        if self.diffusion_treatment not in DIFFUSION_TREATMENTS:
            raise DomainError(f"diffusion_treatment must be one of {DIFFUSION_TREATMENTS}")


@dataclass(frozen=True)
class Forcing:
    """External force ``h(t, x)``, smooth between the listed breakpoints."""

    kind: str
    fn: Callable[[float, np.ndarray], np.ndarray] | None = None
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise DomainError("forcing breakpoints must be strictly increasing")

    @classmethod
    def zero(cls) -> "Forcing":
        return cls("zero")

    @classmethod
    def function(cls, fn, breakpoints: Sequence[float] = ()) -> "Forcing":
        return cls("time_space_function", fn, tuple(float(b) for b in breakpoints))

    @classmethod
    def tabulated(cls, times, x, values) -> "Forcing":
        """Piecewise constant in time (value of row ``j`` on ``[times[j], times[j+1])``),
        linear in space."""
        times = np.asarray(times, dtype=float)
        x = np.asarray(x, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape != (times.size, x.size):
            raise DomainError(f"table shape {values.shape} != ({times.size}, {x.size})")

        def fn(t, xs):
            j = max(int(np.searchsorted(times, t, side="right")) - 1, 0)
            return np.interp(xs, x, values[j])

        return cls("tabulated", fn, tuple(times[1:]))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def eval(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.fn is None:
            return np.zeros_like(x)
        out = np.asarray(self.fn(t, x), dtype=float) * np.ones_like(x)
        if not np.all(np.isfinite(out)):
            raise NumericalError(f"forcing is not finite at t={t}")
        return out


@dataclass
class Trajectory:
    """Time-stamped nodal states.  ``states[j]`` is the solution at ``times[j]``."""

    grid: Grid
    times: np.ndarray
    states: np.ndarray
    control_record: object | None = None
    # integral of the sup norm of the total source (forcing + control) up to times[j]
    source_integral: np.ndarray | None = field(default=None, repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def index(self, t: float, tol: float = 1.0e-9) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > tol:
            raise DomainError(f"time {t} is not on the trajectory grid")
        return j

    def at(self, t: float, tol: float = 1.0e-9) -> np.ndarray:
        return self.states[self.index(t, tol)]

    def extend(self, other: "Trajectory") -> "Trajectory":
        """Concatenate a trajectory that starts where this one ends."""
        if abs(other.times[0] - self.times[-1]) > 1.0e-12:
            raise DomainError("trajectories do not join")
        s_self = self._integral()
        s_other = other._integral() + s_self[-1]
        return Trajectory(
            self.grid,
            np.concatenate([self.times, other.times[1:]]),
            np.concatenate([self.states, other.states[1:]]),
            self.control_record,
            np.concatenate([s_self, s_other[1:]]),
        )

    def _integral(self) -> np.ndarray:
        if self.source_integral is None:
            return np.zeros(self.times.size)
        return self.source_integral


# {{{ discrete operators


@lru_cache(maxsize=64)
def _banded(n: int, coeff: float) -> np.ndarray:
    """Banded storage of ``I - coeff * L`` where ``L`` is the Dirichlet second difference times h^2."""
    ab = np.empty((3, n))
    ab[0, :] = -coeff
    ab[1, :] = 1.0 + 2.0 * coeff
    ab[2, :] = -coeff
    ab[0, 0] = 0.0
    ab[2, -1] = 0.0
    ab.setflags(write=False)
    return ab


def _implicit_solve(rhs: np.ndarray, coeff: float) -> np.ndarray:
    try:
        out = solve_banded((1, 1), _banded(rhs.size, coeff), rhs, check_finite=False)
    except (LinAlgError, ValueError) as exc:
        raise NumericalError(f"tridiagonal solve failed: {exc}") from exc
    return out


def laplacian(u: np.ndarray, h: float) -> np.ndarray:
    """Second difference at the interior nodes."""
    return (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)


def flux_divergence(u: np.ndarray, flux: FluxModel, h: float, treatment: str) -> np.ndarray:
    """Discrete ``A(u)_x`` at the interior nodes."""
    if treatment == "explicit_central":
        Au = flux.A(u)
        return (Au[2:] - Au[:-2]) / (2.0 * h)
    uL, uR = u[:-1], u[1:]
    if flux.split is not None:
        plus, minus = flux.split
        F = plus(uL) + minus(uR)
    else:
        # local Lax-Friedrichs when no upwind splitting is available
        speed = np.maximum(np.abs(flux.A_prime(uL)), np.abs(flux.A_prime(uR)))
        F = 0.5 * (flux.A(uL) + flux.A(uR)) - 0.5 * speed * (uR - uL)
    return (F[1:] - F[:-1]) / h


def linear_divergence(w: np.ndarray, a: np.ndarray, h: float, treatment: str) -> np.ndarray:
    """Discrete ``(a w)_x`` at the interior nodes, conservative form."""
    if treatment == "explicit_central":
        aw = a * w
        return (aw[2:] - aw[:-2]) / (2.0 * h)
    af = 0.5 * (a[:-1] + a[1:])
    F = np.maximum(af, 0.0) * w[:-1] + np.minimum(af, 0.0) * w[1:]
    return (F[1:] - F[:-1]) / h


def _source(t: float, x: np.ndarray, forcing: Forcing | None, xi: float, shape: ControlShape | None):
    """Interior values of ``h(t) + xi * phi``, or None when identically zero."""
    src = None
    if forcing is not None and not forcing.is_zero:
        src = forcing.eval(t, x)[1:-1]
    if shape is not None and xi != 0.0:
        ctl = xi * shape.values[1:-1]
        src = ctl if src is None else src + ctl
    return src


def _imex(u: np.ndarray, t: float, dt: float, explicit, nu: float, h: float, diffusion: str) -> np.ndarray:
    """One IMEX step; ``explicit(v, s)`` returns the interior explicit tendency."""
    E0 = explicit(u, t)
    out = np.empty_like(u)
    out[0] = out[-1] = 0.0
    r = nu * dt / (h * h)
    if diffusion == "implicit_backward_euler":
        out[1:-1] = _implicit_solve(u[1:-1] + dt * E0, r)
        return out
    # Crank-Nicolson for diffusion, Heun for the explicit part
    base = u[1:-1] + 0.5 * dt * nu * laplacian(u, h)
    out[1:-1] = _implicit_solve(base + dt * E0, 0.5 * r)
    E1 = explicit(out, t + dt)
    out[1:-1] = _implicit_solve(base + 0.5 * dt * (E0 + E1), 0.5 * r)
    return out


def _check_state(u: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP_THRESHOLD:
        raise BlowUpError(
            f"solution left |u| <= {BLOWUP_THRESHOLD:g} at t={t:.6g} (max |u| = {np.nanmax(np.abs(u)):.3g})",
            time=t,
        )


# }}}


# {{{ single steps


def _nonlinear_explicit(grid, cfg, flux, forcing, xi, shape):
    h = grid.h

    def explicit(v, s):
        E = -flux_divergence(v, flux, h, cfg.flux_treatment)
        src = _source(s, grid.x, forcing, xi, shape)
        return E if src is None else E + src

    return explicit


def _linear_explicit(grid, cfg, a, forcing, xi, shape):
    h = grid.h

    def explicit(v, s):
        E = -linear_divergence(v, a, h, cfg.flux_treatment)
        src = _source(s, grid.x, forcing, xi, shape)
        return E if src is None else E + src

    return explicit


def step_nonlinear(
    state: np.ndarray,
    t: float,
    cfg: SolverConfig,
    flux: FluxModel,
    grid: Grid,
    forcing: Forcing | None = None,
    control: tuple[float, ControlShape] | None = None,
    dt: float | None = None,
) -> np.ndarray:
    """Advance ``state`` from ``t`` by one step (``cfg.dt`` unless ``dt`` is given).

    ``control`` is the pair ``(xi, phi)`` with ``xi`` the value held over the step.
    No CFL adaptation happens here; see :func:`solve`.
    """
    dt = cfg.dt if dt is None else dt
    xi, shape = control if control is not None else (0.0, None)
    explicit = _nonlinear_explicit(grid, cfg, flux, forcing, float(xi), shape)
    out = _imex(state, t, dt, explicit, cfg.nu, grid.h, cfg.diffusion_treatment)
    _check_state(out, t + dt)
    return out


def step_linearised(
    w: np.ndarray,
    t: float,
    cfg: SolverConfig,
    a_field: np.ndarray,
    grid: Grid,
    forcing: Forcing | None = None,
    control: tuple[float, ControlShape] | None = None,
    dt: float | None = None,
) -> np.ndarray:
    """One IMEX step of ``w_t - nu w_xx + (a w)_x = rhs`` with ``a`` frozen over the step."""
    dt = cfg.dt if dt is None else dt
    xi, shape = control if control is not None else (0.0, None)
    explicit = _linear_explicit(grid, cfg, np.asarray(a_field, dtype=float), forcing, float(xi), shape)
    out = _imex(w, t, dt, explicit, cfg.nu, grid.h, cfg.diffusion_treatment)
    _check_state(out, t + dt)
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def coefficient_field(flux: FluxModel, uhat: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``a = int_0^1 A'(uhat + s w) ds`` by 4-point Gauss-Legendre quadrature."""
    s = 0.5 * (_GL_NODES + 1.0)
    weights = 0.5 * _GL_WEIGHTS
    return sum(wt * flux.A_prime(uhat + si * w) for si, wt in zip(s, weights))


# }}}


# {{{ time integration


def _segments(t0: float, t1: float, breakpoints: Sequence[float]) -> list[tuple[float, float]]:
    cuts = sorted({float(b) for b in breakpoints if t0 + _MIN_SEGMENT < b < t1 - _MIN_SEGMENT})
    edges = [t0, *cuts, t1]
    return list(zip(edges[:-1], edges[1:]))


def _segment_steps(s: float, e: float, dt: float) -> tuple[int, float]:
    n = max(1, math.ceil((e - s) / dt - 1.0e-9))
    step = (e - s) / n
    if abs(step - dt) <= 1.0e-12 * dt:
        step = dt
    return n, step


def _control_breakpoints(signal) -> Sequence[float]:
    return tuple(getattr(signal, "breakpoints", ()) or ())


def _xi_on(signal, s: float, e: float) -> float:
    if signal is None:
        return 0.0
    if callable(signal):
        return float(signal(0.5 * (s + e)))
    return float(signal)


def _integrate(
    u0, window, cfg, grid, forcing, control, step_fn, speed_fn, label: str
) -> Trajectory:
    t0, t1 = (float(v) for v in window)
    if t1 < t0:
        raise DomainError(f"window end {t1} precedes start {t0}")
    u = np.array(u0, dtype=float)
    if u.shape != (grid.n + 2,):
        raise DomainError(f"state has shape {u.shape}, expected ({grid.n + 2},)")
    if u[0] != 0.0 or u[-1] != 0.0:
        raise DomainError("initial state violates the Dirichlet condition")
    signal, shape = control if control is not None else (None, None)

    times = [t0]
    states = [u.copy()]
    integral = [0.0]
    if t1 == t0:
        return Trajectory(grid, np.array(times), np.array(states), signal, np.array(integral))

    breaks = list(forcing.breakpoints) if forcing is not None else []
    breaks += list(_control_breakpoints(signal))
    h = grid.h

    for s, e in _segments(t0, t1, breaks):
        xi = _xi_on(signal, s, e)
        nsteps, step = _segment_steps(s, e, cfg.dt)
        for j in range(nsteps):
            t_start = s + j * step
            t_end = e if j == nsteps - 1 else s + (j + 1) * step
            # the segment step itself (not t_end - t_start) keeps the update
            # independent of the absolute time, so concatenated windows agree bitwise
            pending = [(t_start, step)]
            while pending:
                t, dt = pending.pop()
                halvings = 0
                # halve the step until the CFL bound holds for the current state
                while dt * speed_fn(u, t) / h > cfg.cfl:
                    dt *= 0.5
                    halvings += 1
                    if halvings > cfg.max_halvings:
                        raise NumericalError(f"{label}: CFL cannot be met at t={t:.6g}")
                if halvings:
                    logger.debug("%s: CFL halving x%d at t=%.6g", label, halvings, t)
                    pending.extend((t + (m - 1) * dt, dt) for m in range(2**halvings, 1, -1))
                src_sup = _source_sup(t, grid, forcing, xi, shape)
                try:
                    u = step_fn(u, t, dt, xi, shape)
                except BlowUpError as exc:
                    exc.time = t + dt
                    raise
                times.append(t + dt)
                states.append(u)
                integral.append(integral[-1] + dt * src_sup)
            times[-1] = t_end
    return Trajectory(grid, np.array(times), np.array(states), signal, np.array(integral))


def _source_sup(t, grid, forcing, xi, shape) -> float:
    src = _source(t, grid.x, forcing, xi, shape)
    return 0.0 if src is None else float(np.max(np.abs(src)))


def solve(
    u0: np.ndarray,
    window: tuple[float, float],
    cfg: SolverConfig,
    flux: FluxModel,
    grid: Grid,
    forcing: Forcing | None = None,
    control=None,
) -> Trajectory:
    """Integrate the controlled nonlinear problem over ``window``.

    ``control`` is ``(signal, phi)`` where ``signal`` is a number or a callable
    ``t -> xi`` that is constant between its ``breakpoints`` attribute (if any).
    The time grid contains every forcing and control breakpoint exactly.
    """

    def step_fn(u, t, dt, xi, shape):
        return step_nonlinear(u, t, cfg, flux, grid, forcing, (xi, shape), dt=dt)

    def speed_fn(u, t):
        return float(np.max(np.abs(flux.A_prime(u))))

    return _integrate(u0, window, cfg, grid, forcing, control, step_fn, speed_fn, "nonlinear")


def solve_linearised(
    w0: np.ndarray,
    window: tuple[float, float],
    cfg: SolverConfig,
    a_fn: Callable[[float, np.ndarray], np.ndarray],
    grid: Grid,
    forcing: Forcing | None = None,
    control=None,
) -> Trajectory:
    """Integrate the linearised problem; ``a_fn(t, w)`` gives the coefficient at each step."""
    cache: dict = {}

    def coeff(u, t):
        key = (t, id(u))
        if key not in cache:
            cache.clear()
            cache[key] = np.asarray(a_fn(t, u), dtype=float)
        return cache[key]

    def step_fn(u, t, dt, xi, shape):
        return step_linearised(u, t, cfg, coeff(u, t), grid, forcing, (xi, shape), dt=dt)

    def speed_fn(u, t):
        return float(np.max(np.abs(coeff(u, t))))

    return _integrate(w0, window, cfg, grid, forcing, control, step_fn, speed_fn, "linearised")


# }}}


# {{{ barriers


def barrier_constant(eps: float, T: float, c: float, C: float, h_sup: float) -> float:
    return max(2.0 / c, 2.0 * C * (T + eps), (T + eps) * h_sup / C)


def _check_barrier_args(eps, T, c, C):
    if not eps > 0:
        raise DomainError(f"barrier needs eps > 0, got {eps}")
    if not (T > 0 and c > 0 and C > 0):
        raise DomainError("barrier needs T, c, C > 0")


def barrier_upper(grid: Grid, t: float, eps: float, L: float, T: float, c: float, C: float, h_sup: float) -> np.ndarray:
    """Super-solution ``[B(B + x - a) + L eps] / (t + eps)``."""
    _check_barrier_args(eps, T, c, C)
    B = barrier_constant(eps, T, c, C, h_sup)
    return (B * (B + grid.x - grid.a) + L * eps) / (t + eps)


def barrier_lower(grid: Grid, t: float, eps: float, L: float, T: float, c: float, C: float, h_sup: float) -> np.ndarray:
    """Sub-solution ``-[B(B - x + b) + L eps] / (t + eps)``."""
    _check_barrier_args(eps, T, c, C)
    B = barrier_constant(eps, T, c, C, h_sup)
    return -(B * (B - grid.x + grid.b) + L * eps) / (t + eps)


def sup_bound(grid: Grid, T: float, c: float, C: float, h_sup: float) -> float:
    """The eps -> 0 limit ``B_0 (B_0 + b - a) / T`` of the barriers at time ``T``."""
    B0 = barrier_constant(0.0, T, c, C, h_sup)
    return B0 * (B0 + grid.length) / T


# }}}
