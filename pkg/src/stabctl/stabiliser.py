"""Unit-window feedback loop driving a controlled solution onto a reference one.

Each window ``[k-1, k)`` runs both solutions uncontrolled up to ``k - 1/2``,
classifies the difference ``w`` (squeeze or pulse), and in the pulse case
applies a constant ``xi_k = -sign(w on Pi) K`` over ``[k - 1/2, k - 1/2 + tau_k)``
with ``tau_k = min(kappa * |w(k-1)|_1, 1/4)``.

The constants ``K``, ``kappa``, ``q`` and ``delta`` exist only abstractly in
theory; :func:`calibrate` measures usable values by probing the scenario.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from stabctl.analysis import norm_c2sigma, norm_l1, norm_sup
from stabctl.errors import BlowUpError, DomainError
from stabctl.flux import FluxModel
from stabctl.grid import ControlShape, Grid
from stabctl.solver import Forcing, SolverConfig, Trajectory, solve

logger = logging.getLogger(__name__)

CONVERGED_L1 = 1.0e-12
SQUEEZE, PULSE, NEITHER, CONVERGED = "squeeze", "pulse", "neither", "converged"


@dataclass(frozen=True)
class Scenario:
    """Everything the loop needs besides initial data."""

    grid: Grid
    flux: FluxModel
    cfg: SolverConfig
    shape: ControlShape
    forcing: Forcing = field(default_factory=Forcing.zero)
    sigma: float = 0.25
    gamma: float = 0.5

    @property
    def pi(self) -> tuple[float, float]:
        return self.shape.support


@dataclass(frozen=True)
class StabiliserParams:
    K: float
    kappa: float
    theta: float = 0.5
    q: float = 0.75
    delta: float = 0.1
    tau_cap: float = 0.25
    pulse_enabled: bool = True
    # constant of the pulse-size constraint tau |xi| <= K1 d
    K1: float = 1.0
    max_replans: int = 5

    def __post_init__(self):
        if not (self.K > 0 and self.kappa > 0 and self.delta > 0):
            raise DomainError("K, kappa and delta must be positive")
        if not 0 < self.q < 1:
            raise DomainError(f"q must lie in (0, 1), got {self.q}")
        if not 0 < self.theta < 1:
            raise DomainError(f"theta must lie in (0, 1), got {self.theta}")
        if not 0 < self.tau_cap <= 0.25:
            raise DomainError(f"tau_cap must lie in (0, 1/4], got {self.tau_cap}")

    def contraction_bound(self, shape: ControlShape) -> float:
        """Per-window factor ``q1 = max(q, 1 - theta delta |phi|_1 / (2M))`` promised by the construction."""
        if not self.pulse_enabled:
            return self.q
        return max(self.q, 1.0 - 0.5 * self.theta * self.delta * shape.l1_norm / shape.sup_norm)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DichotomyVerdict:
    l1_ratio: float
    inf_on_pi: float
    sign_on_pi: int  # +1, -1, or 0 for mixed
    branch: str


@dataclass(frozen=True)
class WindowRecord:
    k: int
    branch: str
    xi_k: float
    tau_k: float
    d_prev: float
    kappa: float
    theta: float
    l1_ratio: float
    inf_on_pi: float
    sign_on_pi: int
    replans: int = 0
    constraints_ok: bool = True

    @property
    def pulse_start(self) -> float:
        return self.k - 0.5

    @property
    def pulse_end(self) -> float:
        return self.k - 0.5 + self.tau_k


class ControlSchedule:
    """Realised piecewise-constant signal ``xi(t)`` built from window records."""

    def __init__(self, windows: Sequence[WindowRecord] = ()):
        self.windows: list[WindowRecord] = list(windows)

    def _record(self, t: float) -> WindowRecord | None:
        k = math.floor(t) + 1
        if 1 <= k <= len(self.windows):
            return self.windows[k - 1]
        return None

    def __call__(self, t: float) -> float:
        rec = self._record(t)
        if rec is None or rec.tau_k == 0.0:
            return 0.0
        if rec.pulse_start <= t < rec.pulse_end:
            return rec.xi_k
        return 0.0

    eval = __call__

    @property
    def breakpoints(self) -> list[float]:
        out = []
        for rec in self.windows:
            out += [rec.k - 1.0, rec.k - 0.5]
            if rec.tau_k > 0:
                out.append(rec.pulse_end)
        return out

    def sample(self, times: np.ndarray) -> np.ndarray:
        """``xi`` on a time grid; a grid point takes the value of the step it starts."""
        times = np.asarray(times, dtype=float)
        out = np.zeros_like(times)
        if times.size > 1:
            mids = 0.5 * (times[:-1] + times[1:])
            out[:-1] = [self(m) for m in mids]
        return out

    def to_list(self) -> list[dict]:
        return [
            {"k": r.k, "branch": r.branch, "xi_k": r.xi_k, "tau_k": r.tau_k, "d_prev": r.d_prev,
             "kappa": r.kappa, "theta": r.theta, "l1_ratio": r.l1_ratio,
             "inf_on_pi": r.inf_on_pi, "sign_on_pi": r.sign_on_pi,
             "replans": r.replans, "constraints_ok": r.constraints_ok}
            for r in self.windows
        ]

    @classmethod
    def from_list(cls, rows: Sequence[dict]) -> "ControlSchedule":
        return cls([WindowRecord(**row) for row in rows])


# {{{ dichotomy and planning


def dichotomy_test(
    w_start: np.ndarray,
    w_half: np.ndarray,
    grid: Grid,
    params: StabiliserParams,
    pi: tuple[float, float],
) -> DichotomyVerdict:
    """Classify the evolved difference: L1 squeezed by ``q``, or bounded below on ``Pi`` by ``delta``."""
    d = norm_l1(w_start, grid)
    if d == 0.0:
        return DichotomyVerdict(0.0, 0.0, 0, CONVERGED)
    mask = grid.nodes_in(*pi)
    if not mask.any():
        raise DomainError(f"no grid node in Pi = {pi}")
    on_pi = w_half[mask]
    l1_ratio = norm_l1(w_half, grid) / d
    inf_on_pi = float(np.abs(on_pi).min()) / d
    if np.all(on_pi > 0):
        sign = 1
    elif np.all(on_pi < 0):
        sign = -1
    else:
        sign = 0
    if l1_ratio <= params.q:
        branch = SQUEEZE
    elif params.pulse_enabled and sign != 0 and inf_on_pi >= params.delta:
        branch = PULSE
    else:
        branch = NEITHER
    return DichotomyVerdict(l1_ratio, inf_on_pi, sign, branch)


@dataclass(frozen=True)
class WindowPlan:
    xi_k: float
    tau_k: float
    branch: str
    kappa: float
    theta: float
    replans: int = 0
    constraints_ok: bool = True


def pulse_constraints_hold(tau: float, xi: float, d: float, gamma: float, K1: float) -> bool:
    """``tau^(1-gamma) |xi| <= 1`` and ``tau |xi| <= K1 d``."""
    return tau ** (1.0 - gamma) * abs(xi) <= 1.0 and tau * abs(xi) <= K1 * d * (1.0 + 1e-12)


def plan_window(
    k: int,
    u_prev: np.ndarray,
    uhat_prev: np.ndarray,
    verdict: DichotomyVerdict,
    params: StabiliserParams,
    grid: Grid,
    gamma: float | None = None,
) -> WindowPlan:
    """Choose ``(xi_k, tau_k)`` for window ``k`` from the half-window verdict.

    With ``gamma`` given, the pulse-size constraints are checked; each violation
    halves ``theta`` (and ``kappa`` with it) and replans, up to ``params.max_replans`` times.
    """
    if verdict.branch != PULSE:
        return WindowPlan(0.0, 0.0, verdict.branch, params.kappa, params.theta)
    if verdict.sign_on_pi == 0:
        raise DomainError(f"window {k}: pulse verdict with mixed sign on Pi")
    d = norm_l1(u_prev - uhat_prev, grid)
    xi = -verdict.sign_on_pi * params.K
    kappa, theta = params.kappa, params.theta
    tau = min(kappa * d, params.tau_cap)
    replans = 0
    ok = True
    if gamma is not None:
        ok = pulse_constraints_hold(tau, xi, d, gamma, params.K1)
        while not ok and replans < params.max_replans:
            replans += 1
            kappa *= 0.5
            theta *= 0.5
            tau = min(kappa * d, params.tau_cap)
            ok = pulse_constraints_hold(tau, xi, d, gamma, params.K1)
        if replans:
            logger.info("window %d: pulse constraints forced %d replan(s), theta -> %.4g", k, replans, theta)
        if not ok:
            logger.warning("window %d: pulse constraints still violated after %d replans", k, replans)
    return WindowPlan(xi, tau, PULSE, kappa, theta, replans, ok)


# }}}


# {{{ the loop


@dataclass
class StabilisationResult:
    u: Trajectory | None
    uhat: Trajectory | None
    schedule: ControlSchedule
    params: StabiliserParams
    t: list[float]
    d_l1: list[float]
    d_sup: list[float]
    d_c2sigma: list[float]
    failure: BlowUpError | None = None
    u_final: np.ndarray | None = None
    uhat_final: np.ndarray | None = None

    @property
    def ratios(self) -> np.ndarray:
        d = np.asarray(self.d_l1)
        prev = d[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(prev > 0, d[1:] / prev, 0.0)

    @property
    def branches(self) -> list[str]:
        return [r.branch for r in self.schedule.windows]

    def max_ratio(self, start: int = 0) -> float:
        r = self.ratios[start:]
        return float(r.max()) if r.size else 0.0


def _segment(state, t0, t1, scenario: Scenario, xi: float) -> Trajectory:
    control = (xi, scenario.shape) if xi != 0.0 else None
    return solve(state, (t0, t1), scenario.cfg, scenario.flux, scenario.grid, scenario.forcing, control)


def _join(acc: Trajectory | None, piece: Trajectory) -> Trajectory:
    return piece if acc is None else acc.extend(piece)


def stabilise(
    u0: np.ndarray,
    uhat0: np.ndarray,
    horizon: int,
    scenario: Scenario,
    params: StabiliserParams,
    *,
    reduction: bool = False,
    keep_trajectories: bool = True,
    record_c2sigma: bool = True,
    check_constraints: bool = True,
    stop_below: float = CONVERGED_L1,
) -> StabilisationResult:
    """Run ``horizon`` unit windows of the feedback loop.

    ``reduction`` forces ``xi = 0`` on the first window.  The loop stops early
    once ``|u - uhat|_1`` falls below ``stop_below`` (``1e-12``; pass a negative
    value to always run the full horizon).  A blow-up is captured in
    ``result.failure`` with its window index instead of propagating.
    """
    grid = scenario.grid
    u = np.array(u0, dtype=float)
    uh = np.array(uhat0, dtype=float)

    def norms(w):
        c2 = norm_c2sigma(w, grid, scenario.sigma) if record_c2sigma else float("nan")
        return norm_l1(w, grid), norm_sup(w), c2

    d0, s0, c0 = norms(u - uh)
    res = StabilisationResult(None, None, ControlSchedule(), params, [0.0], [d0], [s0], [c0])
    traj_u = traj_uh = None
    current = params

    for k in range(1, horizon + 1):
        if res.d_l1[-1] < stop_below:
            break
        t0, th, t1 = k - 1.0, k - 0.5, float(k)
        d_prev = res.d_l1[-1]
        try:
            pu = _segment(u, t0, th, scenario, 0.0)
            ph = _segment(uh, t0, th, scenario, 0.0)
            verdict = dichotomy_test(u - uh, pu.final - ph.final, grid, current, scenario.pi)
            if reduction and k == 1 and verdict.branch == PULSE:
                verdict = replace(verdict, branch=SQUEEZE)
            if verdict.branch == NEITHER:
                logger.warning(
                    "window %d: neither branch (l1_ratio=%.4g, inf_on_pi=%.4g, sign=%d); applying xi = 0",
                    k, verdict.l1_ratio, verdict.inf_on_pi, verdict.sign_on_pi,
                )
            plan = plan_window(k, u, uh, verdict, current, grid, scenario.gamma if check_constraints else None)
            if plan.replans:
                current = replace(current, kappa=plan.kappa, theta=plan.theta)
            pieces_u = [pu]
            pieces_h = [ph]
            if plan.branch == PULSE and plan.tau_k > 0:
                tp = th + plan.tau_k
                pieces_u.append(_segment(pu.final, th, tp, scenario, plan.xi_k))
                pieces_h.append(_segment(ph.final, th, tp, scenario, 0.0))
                th = tp
            pieces_u.append(_segment(pieces_u[-1].final, th, t1, scenario, 0.0))
            pieces_h.append(_segment(pieces_h[-1].final, th, t1, scenario, 0.0))
        except BlowUpError as exc:
            exc.window = k
            logger.error("window %d: %s", k, exc)
            res.failure = exc
            break

        res.schedule.windows.append(
            WindowRecord(k, plan.branch, plan.xi_k, plan.tau_k, d_prev, plan.kappa, plan.theta,
                         verdict.l1_ratio, verdict.inf_on_pi, verdict.sign_on_pi,
                         plan.replans, plan.constraints_ok)
        )
        if keep_trajectories:
            for pu_, ph_ in zip(pieces_u, pieces_h):
                traj_u = _join(traj_u, pu_)
                traj_uh = _join(traj_uh, ph_)
        u, uh = pieces_u[-1].final, pieces_h[-1].final
        d, s, c = norms(u - uh)
        res.t.append(t1)
        res.d_l1.append(d)
        res.d_sup.append(s)
        res.d_c2sigma.append(c)

    if keep_trajectories and traj_u is not None:
        traj_u.control_record = res.schedule
        res.u, res.uhat = traj_u, traj_uh
    res.params = current
    res.u_final, res.uhat_final = u, uh
    return res


# }}}


# {{{ calibration


@dataclass
class CalibrationReport:
    C1: float
    q: float
    delta: float | None
    pulse_enabled: bool
    probes: list[dict]
    pulse_probes: list[dict]
    warnings: list[str]

    def to_dict(self) -> dict:
        return asdict(self)


def random_perturbation(grid: Grid, rng: np.random.Generator, amplitude: float = 0.5, modes: int = 5) -> np.ndarray:
    """Random sine series ``sum_m c_m sin(m pi (x-a)/(b-a))`` with ``|c_m| <= amplitude / m``."""
    coeffs = rng.uniform(-amplitude, amplitude, size=modes) / np.arange(1, modes + 1)
    xi = (np.asarray(grid.x) - grid.a) / grid.length
    w = sum(c * np.sin((m + 1) * np.pi * xi) for m, c in enumerate(coeffs))
    w[0] = w[-1] = 0.0
    return w


def calibrate(
    scenario: Scenario,
    uhat0: np.ndarray,
    probe_count: int,
    *,
    seed: int = 0,
    amplitude: float = 0.5,
    theta: float = 0.5,
    q_floor: float = 0.75,
    probe_taus: Sequence[float] = (0.01, 0.02, 0.05),
    C1_safety: float = 1.5,
    probes: Sequence[np.ndarray] | None = None,
) -> tuple[StabiliserParams, CalibrationReport]:
    """Measure ``C1``, ``q`` and ``delta`` on random probe differences.

    ``C1``: worst ``|z(tau) - z(0) - tau xi phi|_1 / tau`` over pulse probes with
    ``tau |xi| = 1``, times ``C1_safety``.  ``q``: ``q_floor``.  ``delta``: half the
    smallest relative lower bound on ``Pi`` among probes that do not squeeze.
    Then ``K = 2 C1 / |phi|_1`` and ``kappa = theta delta |phi|_1 / (2 C1 M)``.
    """
    if probe_count < 3:
        raise DomainError(f"need at least 3 probes, got {probe_count}")
    grid, shape = scenario.grid, scenario.shape
    rng = np.random.default_rng(seed)
    if probes is None:
        probes = [random_perturbation(grid, rng, amplitude) for _ in range(probe_count)]
    warnings: list[str] = []
    q = q_floor

    # half-window dichotomy probes
    uh_half = _segment(uhat0, 0.0, 0.5, scenario, 0.0).final
    probe_rows = []
    starts = []
    nominal = StabiliserParams(K=1.0, kappa=1.0, q=q, delta=1.0, pulse_enabled=False)
    for i, w0 in enumerate(probes):
        u_half = _segment(uhat0 + w0, 0.0, 0.5, scenario, 0.0).final
        v = dichotomy_test(w0, u_half - uh_half, grid, nominal, scenario.pi)
        probe_rows.append({"probe": i, "l1_ratio": v.l1_ratio, "inf_on_pi": v.inf_on_pi,
                           "sign_on_pi": v.sign_on_pi, "squeezes": v.l1_ratio <= q})
        starts.append(u_half)

    loose = [r for r in probe_rows if not r["squeezes"]]
    delta = None
    pulse_enabled = True
    if not loose:
        pulse_enabled = False
        warnings.append("every probe squeezed; delta is indeterminate and the pulse branch is disabled")
    else:
        delta = 0.5 * min(r["inf_on_pi"] for r in loose)
        if delta <= 0.0:
            pulse_enabled = False
            delta = None
            warnings.append("a non-squeezing probe changes sign on Pi; pulse branch disabled")

    # pulse probes for C1, launched from the evolved probe states
    pulse_rows = []
    for i, u_start in enumerate(starts):
        tau = probe_taus[i % len(probe_taus)]
        xi = (1.0 if i % 2 == 0 else -1.0) / tau
        z0 = u_start - uh_half
        u_tau = _segment(u_start, 0.5, 0.5 + tau, scenario, xi).final
        uh_tau = _segment(uh_half, 0.5, 0.5 + tau, scenario, 0.0).final
        resid = norm_l1(u_tau - uh_tau - z0 - tau * xi * shape.values, grid) / tau
        pulse_rows.append({"probe": i, "tau": tau, "xi": xi, "residual_rate": resid})
    C1 = C1_safety * max(r["residual_rate"] for r in pulse_rows)

    phi1, M = shape.l1_norm, shape.sup_norm
    K = 2.0 * C1 / phi1
    d_eff = delta if delta is not None else 1.0
    kappa = theta * d_eff * phi1 / (2.0 * C1 * M)
    params = StabiliserParams(K=K, kappa=kappa, theta=theta, q=q, delta=d_eff, pulse_enabled=pulse_enabled)
    for w in warnings:
        logger.warning("calibrate: %s", w)
    report = CalibrationReport(C1, q, delta, pulse_enabled, probe_rows, pulse_rows, warnings)
    return params, report


def pulse_magnitude(C1: float, phi_l1: float) -> float:
    """``K = 2 C1 / |phi|_1``."""
    return 2.0 * C1 / phi_l1


def pulse_rate(theta: float, delta: float, phi_l1: float, C1: float, M: float) -> float:
    """``kappa = theta delta |phi|_1 / (2 C1 M)``."""
    return theta * delta * phi_l1 / (2.0 * C1 * M)


# }}}


# {{{ schedule replay


def check_schedule(
    schedule: ControlSchedule, K: float, tau_cap: float = 0.25, tol: float = 1.0e-12
) -> list[str]:
    """Replay a schedule against the required piecewise pattern; returns the violations found."""
    problems = []
    for i, rec in enumerate(schedule.windows):
        tag = f"window {rec.k}"
        if rec.k != i + 1:
            problems.append(f"{tag}: out of order (position {i + 1})")
        if rec.branch == PULSE:
            if abs(abs(rec.xi_k) - K) > tol * max(K, 1.0):
                problems.append(f"{tag}: |xi_k| = {abs(rec.xi_k)} != K = {K}")
            expected = min(rec.kappa * rec.d_prev, tau_cap)
            if abs(rec.tau_k - expected) > tol:
                problems.append(f"{tag}: tau_k = {rec.tau_k} != min(kappa d, cap) = {expected}")
            if not 0.0 < rec.tau_k <= tau_cap:
                problems.append(f"{tag}: tau_k = {rec.tau_k} outside (0, {tau_cap}]")
        elif rec.xi_k != 0.0 or rec.tau_k != 0.0:
            problems.append(f"{tag}: {rec.branch} window carries a pulse")
        # sample the realised signal on a fine grid inside the window
        ts = rec.k - 1.0 + np.linspace(0.0, 1.0, 401, endpoint=False)
        for t in ts:
            inside = rec.branch == PULSE and rec.pulse_start <= t < rec.pulse_end
            want = rec.xi_k if inside else 0.0
            if schedule(t) != want:
                problems.append(f"{tag}: xi({t:.4f}) = {schedule(t)} but expected {want}")
                break
        if rec.branch == PULSE:
            for t in (rec.pulse_start, np.nextafter(rec.pulse_end, -np.inf)):
                if schedule(t) != rec.xi_k:
                    problems.append(f"{tag}: xi not equal to xi_k at t = {t}")
            if schedule(rec.pulse_end) != 0.0 and rec.pulse_end < rec.k:
                problems.append(f"{tag}: xi does not switch off at the pulse end")
    return problems


# }}}
