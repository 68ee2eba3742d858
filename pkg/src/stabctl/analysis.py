"""Discrete norms, decay fitting and the checks behind each stability principle.

Everything here is a pure function of nodal arrays (plus their grid) or of a
:class:`~stabctl.solver.Trajectory`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from stabctl.errors import DomainError, FitError
from stabctl.grid import Grid, trapezoid
from stabctl.solver import Trajectory, barrier_lower, barrier_upper

HOLDER_MAX_NODES = 2000
DECAY_FLOOR = 1.0e-13


@dataclass(frozen=True)
class NormReport:
    l1: float
    sup: float
    c2sigma: float
    sigma: float
    gamma: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DecayFit:
    alpha: float
    beta: float | None
    c_fit: float
    r_squared: float
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


# {{{ norms


def norm_l1(values: np.ndarray, grid: Grid) -> float:
    """Trapezoid-rule integral of ``|f|``."""
    return trapezoid(np.abs(values), grid)


def norm_sup(values: np.ndarray) -> float:
    return float(np.max(np.abs(values)))


def holder_seminorm(g: np.ndarray, x: np.ndarray, sigma: float, chunk: int = 512) -> float:
    """``max_{i != j} |g_i - g_j| / |x_i - x_j|^sigma`` by exhaustive pair search."""
    best = 0.0
    for i in range(0, g.size, chunk):
        dg = np.abs(g[i : i + chunk, None] - g[None, :])
        dx = np.abs(x[i : i + chunk, None] - x[None, :])
        off = dx > 0
        if off.any():
            best = max(best, float(np.max(dg[off] / dx[off] ** sigma)))
    return best


def discrete_derivatives(values: np.ndarray, grid: Grid) -> list[tuple[np.ndarray, np.ndarray]]:
    """``(D^k f, nodes)`` for k = 0, 1, 2; derivatives live on the interior nodes."""
    h = grid.h
    x = np.asarray(grid.x)
    d1 = (values[2:] - values[:-2]) / (2.0 * h)
    d2 = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / (h * h)
    return [(values, x), (d1, x[1:-1]), (d2, x[1:-1])]


def norm_c2sigma(values: np.ndarray, grid: Grid, sigma: float) -> float:
    """Discrete ``C^{2+sigma}`` norm: sum over k <= 2 of ``sup|D^k f| + [D^k f]_sigma``."""
    if not 0.0 < sigma < 1.0:
        raise DomainError(f"sigma must lie in (0, 1), got {sigma}")
    if grid.n < 5:
        raise DomainError(f"C^(2+sigma) norm needs n >= 5, got n={grid.n}")
    if grid.n + 2 > HOLDER_MAX_NODES:
        raise DomainError(f"Hoelder seminorm is capped at {HOLDER_MAX_NODES} nodes")
    total = 0.0
    for g, x in discrete_derivatives(values, grid):
        total += float(np.max(np.abs(g))) + holder_seminorm(g, x, sigma)
    return total


def norm_report(values: np.ndarray, grid: Grid, sigma: float, gamma: float) -> NormReport:
    return NormReport(
        l1=norm_l1(values, grid),
        sup=norm_sup(values),
        c2sigma=norm_c2sigma(values, grid, sigma),
        sigma=sigma,
        gamma=gamma,
    )


# }}}


# {{{ interpolation, Harnack, decay


def gns_theta(sigma: float, gamma: float, d: int = 1) -> float:
    return (gamma - sigma) / (d + gamma + 2.0)


def check_gns(values: np.ndarray, grid: Grid, sigma: float, gamma: float) -> float:
    """Log-margin of the interpolation inequality

        ||f||_{C^{2+sigma}} <= C ||f||_{L1}^theta ||f||_{C^{2+gamma}}^{1-theta}.

    The inequality holds with constant ``C`` iff the returned value is ``<= log C``.
    """
    if not 0.0 < sigma < gamma < 1.0:
        raise DomainError(f"need 0 < sigma < gamma < 1, got sigma={sigma}, gamma={gamma}")
    if not np.any(values):
        raise DomainError("interpolation margin is undefined for the zero field")
    theta = gns_theta(sigma, gamma)
    lo = norm_c2sigma(values, grid, sigma)
    hi = norm_c2sigma(values, grid, gamma)
    l1 = norm_l1(values, grid)
    return float(np.log(lo) - theta * np.log(l1) - (1.0 - theta) * np.log(hi))


def harnack_ratio(traj: Trajectory, K: tuple[float, float], s: float, t: float) -> float:
    """``sup_K w(s) / inf_K w(t)`` for a non-negative trajectory; ``inf`` if the denominator vanishes."""
    grid = traj.grid
    k1, k2 = K
    if not 0.0 < s < t:
        raise DomainError(f"need 0 < s < t, got s={s}, t={t}")
    if not grid.a < k1 <= k2 < grid.b:
        raise DomainError(f"K = [{k1}, {k2}] must lie strictly inside the domain")
    ws, wt = traj.at(s), traj.at(t)
    if ws.min() < 0.0:
        raise DomainError("Harnack ratio needs non-negative data at time s")
    mask = grid.nodes_in(k1, k2)
    if not mask.any():
        raise DomainError(f"no grid node in K = [{k1}, {k2}]")
    num = float(ws[mask].max())
    den = float(wt[mask].min())
    if den <= 0.0:
        return float("inf")
    return num / den


def _fit_one(t: np.ndarray, d: np.ndarray) -> tuple[float, float, float, int]:
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    keep = d > DECAY_FLOOR
    if keep.sum() < 5:
        raise FitError(f"need at least 5 points above {DECAY_FLOOR:g}, have {int(keep.sum())}")
    t, y = t[keep], np.log(d[keep])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return -float(slope), float(np.exp(intercept)), float(np.clip(r2, 0.0, 1.0)), int(keep.sum())


def fit_decay(series) -> DecayFit:
    """Least-squares fit of ``log d_k = log c - alpha t_k``.

    ``series`` is one ``(t, d)`` pair or a list of them.  With several runs,
    each run is fitted on its points after the first (the first point is the
    initial distance ``d_0`` itself and would pin ``c`` to it); ``alpha``,
    ``c_fit`` and ``r_squared`` are medians and ``beta`` is the slope of
    ``log c`` against ``log d_0`` across runs.
    """
    if isinstance(series, tuple) and len(series) == 2 and np.ndim(series[0]) == 1:
        alpha, c, r2, npts = _fit_one(*series)
        return DecayFit(alpha, None, c, r2, npts)
    fits = [_fit_one(np.asarray(t)[1:], np.asarray(d)[1:]) for t, d in series]
    alpha = float(np.median([f[0] for f in fits]))
    r2 = float(np.median([f[2] for f in fits]))
    c = float(np.median([f[1] for f in fits]))
    d0 = np.array([np.asarray(d, dtype=float)[0] for _, d in series])
    beta = None
    if len(fits) >= 2 and np.ptp(np.log(d0)) > 0:
        beta = float(np.polyfit(np.log(d0), np.log([f[1] for f in fits]), 1)[0])
    return DecayFit(alpha, beta, c, r2, sum(f[3] for f in fits))


def observed_orders(sizes: Sequence[float], errors: Sequence[float]) -> np.ndarray:
    """Successive orders ``log(e_i / e_{i+1}) / log(s_i / s_{i+1})``."""
    s = np.asarray(sizes, dtype=float)
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(s[:-1] / s[1:])


# }}}


# {{{ principle oracles


def l1_growth(traj: Trajectory) -> float:
    """Largest per-step relative growth ``(|w_{k+1}|_1 - |w_k|_1) / |w_k|_1``."""
    h = traj.grid.h
    norms = h * np.abs(traj.states[:, 1:-1]).sum(axis=1)
    prev = norms[:-1]
    ok = prev > 0
    if not ok.any():
        return 0.0
    return float(np.max((norms[1:][ok] - prev[ok]) / prev[ok]))


def max_principle_margin(traj: Trajectory) -> float:
    """``min_t ( |u(0)|_inf + int_0^t |source|_inf ds - |u(t)|_inf )``; negative means violated."""
    sups = np.abs(traj.states).max(axis=1)
    integral = traj.source_integral if traj.source_integral is not None else np.zeros_like(sups)
    return float(np.min(sups[0] + integral - sups))


def barrier_margins(
    u: np.ndarray, grid: Grid, T: float, eps: float, L: float, c: float, C: float, h_sup: float
) -> tuple[float, float]:
    """``(min(u_plus - u), min(u - u_minus))`` at time ``T``; both must be ``>= 0``."""
    up = barrier_upper(grid, T, eps, L, T, c, C, h_sup)
    lo = barrier_lower(grid, T, eps, L, T, c, C, h_sup)
    return float(np.min(up - u)), float(np.min(u - lo))


def min_value(traj: Trajectory) -> float:
    return float(traj.states.min())


# }}}
