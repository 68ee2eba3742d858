"""Scenario configuration, experiment runs and result persistence.

A scenario is one TOML document::

    name = "S1"
    nu = 0.1
    flux = "burgers"
    horizon = 20
    pi = [0.4, 0.6]
    sigma = 0.25
    gamma = 0.5
    seed = 0

    [grid]
    a = 0.0
    b = 1.0
    n = 400

    [forcing]                 # kind = "zero" | "analytic" | "tabulated"
    kind = "zero"

    [uhat0]
    family = "sin"
    terms = [[1, 0.3]]

    [u0]
    parts = [{family = "sin", terms = [[1, 0.3], [2, 0.5]]}]

    [solver]
    dt = 0.0025
    flux_treatment = "explicit_upwind"
    diffusion_treatment = "implicit_backward_euler"

    [stabiliser]              # mode = "calibrate" | "fixed"
    mode = "calibrate"
    probe_count = 8

Output files of a stabilisation run (``--out DIR``):

* ``decay.csv``: ``k,d_l1,d_sup,d_c2sigma``, one row per completed window plus ``k = 0``
* ``control.csv``: ``t,xi`` on the solver time grid
* ``result.json``: ``{config, calibration, schedule, decay_fit, checks, timing, failure, schema_version}``
* ``trajectory.csv`` / ``trajectory.json`` when ``[output] trajectory = true``
"""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

import numpy as np

from stabctl.analysis import (
    fit_decay,
    max_principle_margin,
    norm_c2sigma,
    norm_l1,
)
from stabctl.errors import ConfigError, FitError
from stabctl.flux import check_sign_condition, get_flux
from stabctl.grid import Grid, make_bump, make_grid
from stabctl.profiles import profile_fn, sample_profile
from stabctl.solver import DIFFUSION_TREATMENTS, FLUX_TREATMENTS, Forcing, SolverConfig, Trajectory
from stabctl.stabiliser import (
    NEITHER,
    Scenario,
    StabilisationResult,
    StabiliserParams,
    calibrate,
    check_schedule,
    stabilise,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
LOG_ENV = "STABCTL_LOG"
_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def configure_logging() -> None:
    level = os.environ.get(LOG_ENV, "warn").lower()
    logging.basicConfig(level=_LOG_LEVELS.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("stabctl").setLevel(_LOG_LEVELS.get(level, logging.WARNING))


# {{{ configuration


def _get(d: Mapping, key: str, where: str, kind, default=...):
    if key not in d:
        if default is ...:
            raise ConfigError(f"{where}{key}: missing")
        return default
    v = d[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if kind is int and isinstance(v, float) and v == int(v):
        v = int(v)
    if not isinstance(v, kind) or (kind in (int, float) and isinstance(v, bool)):
        raise ConfigError(f"{where}{key}: expected {getattr(kind, '__name__', kind)}, got {v!r}")
    return v


def _table(d: Mapping, key: str, required: bool = True) -> Mapping:
    v = d.get(key)
    if v is None:
        if required:
            raise ConfigError(f"{key}: missing table")
        return {}
    if not isinstance(v, Mapping):
        raise ConfigError(f"{key}: expected a table")
    return v


def _forcing(table: Mapping, grid: Grid, base_dir: Path) -> Forcing:
    kind = table.get("kind", "zero")
    if kind == "zero":
        return Forcing.zero()
    if kind == "analytic":
        shape = profile_fn(_table(table, "profile"), grid, "forcing.profile")
        time_kind = table.get("time", "constant")
        if time_kind == "constant":
            return Forcing.function(lambda t, x: shape(x))
        if time_kind == "cos":
            omega = _get(table, "omega", "forcing.", float)
            return Forcing.function(lambda t, x: math.cos(omega * t) * shape(x))
        if time_kind == "step":
            t_off = _get(table, "t_off", "forcing.", float)
            return Forcing.function(lambda t, x: shape(x) * (1.0 if t < t_off else 0.0), [t_off])
        raise ConfigError(f"forcing.time: unknown time profile {time_kind!r} (constant, cos, step)")
    if kind == "tabulated":
        path = base_dir / _get(table, "file", "forcing.", str)
        try:
            data = np.genfromtxt(path, delimiter=",", names=True)
        except OSError as exc:
            raise ConfigError(f"forcing.file: cannot read {path}: {exc}") from exc
        if data.dtype.names is None or set(data.dtype.names) != {"t", "x", "h"}:
            raise ConfigError(f"forcing.file: {path} must have header t,x,h")
        times = np.unique(data["t"])
        xs = np.unique(data["x"])
        table = np.full((times.size, xs.size), np.nan)
        table[np.searchsorted(times, data["t"]), np.searchsorted(xs, data["x"])] = data["h"]
        if np.isnan(table).any():
            raise ConfigError(f"forcing.file: {path} is not a complete (t, x) table")
        return Forcing.tabulated(times, xs, table)
    raise ConfigError(f"forcing.kind: unknown kind {kind!r} (zero, analytic, tabulated)")


@dataclass
class ScenarioConfig:
    """A parsed and resolved scenario file."""

    raw: dict
    name: str
    scenario: Scenario
    u0: np.ndarray
    uhat0: np.ndarray
    horizon: int
    seed: int
    stabiliser: dict
    reduction: bool = False
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base_dir: Path | str = ".") -> "ScenarioConfig":
        base_dir = Path(base_dir)
        raw = copy.deepcopy(dict(raw))
        g = _table(raw, "grid")
        grid = make_grid_checked(_get(g, "a", "grid.", float), _get(g, "b", "grid.", float), _get(g, "n", "grid.", int))
        flux = get_flux(_get(raw, "flux", "", str))
        nu = _get(raw, "nu", "", float)
        s = _table(raw, "solver")
        ft = _get(s, "flux_treatment", "solver.", str, "explicit_upwind")
        dtt = _get(s, "diffusion_treatment", "solver.", str, "implicit_backward_euler")
        if ft not in FLUX_TREATMENTS:
            raise ConfigError(f"solver.flux_treatment: {ft!r} not in {FLUX_TREATMENTS}")
        if dtt not in DIFFUSION_TREATMENTS:
            raise ConfigError(f"solver.diffusion_treatment: {dtt!r} not in {DIFFUSION_TREATMENTS}")
        if not nu > 0:
            raise ConfigError(f"nu: must be positive, got {nu}")
        dt = _get(s, "dt", "solver.", float)
        if not dt > 0:
            raise ConfigError(f"solver.dt: must be positive, got {dt}")
        cfg = SolverConfig(nu=nu, dt=dt, flux_treatment=ft, diffusion_treatment=dtt)
        pi = raw.get("pi")
        if not (isinstance(pi, list) and len(pi) == 2):
            raise ConfigError("pi: expected [p1, p2]")
        try:
            shape = make_bump(grid, float(pi[0]), float(pi[1]))
        except ValueError as exc:
            raise ConfigError(f"pi: {exc}") from exc
        sigma = _get(raw, "sigma", "", float, 0.25)
        gamma = _get(raw, "gamma", "", float, 0.5)
        if not 0 < sigma < gamma < 1:
            raise ConfigError(f"sigma, gamma: need 0 < sigma < gamma < 1, got {sigma}, {gamma}")
        forcing = _forcing(_table(raw, "forcing", required=False), grid, base_dir)
        scenario = Scenario(grid, flux, cfg, shape, forcing, sigma, gamma)
        uhat0 = sample_profile(_table(raw, "uhat0"), grid, "uhat0")
        u0 = sample_profile(_table(raw, "u0"), grid, "u0")
        horizon = _get(raw, "horizon", "", int, 20)
        if horizon < 0:
            raise ConfigError(f"horizon: must be non-negative, got {horizon}")
        stab = dict(_table(raw, "stabiliser", required=False)) or {"mode": "calibrate"}
        if stab.get("mode", "calibrate") not in ("calibrate", "fixed"):
            raise ConfigError(f"stabiliser.mode: {stab.get('mode')!r} not in (calibrate, fixed)")
        for key, init in (("u0", u0), ("uhat0", uhat0)):
            warn_incompatible(key, init, scenario)
        warn_sign_condition(scenario, max(np.abs(u0).max(), np.abs(uhat0).max()), horizon)
        return cls(
            raw=raw,
            name=_get(raw, "name", "", str, "scenario"),
            scenario=scenario,
            u0=u0,
            uhat0=uhat0,
            horizon=horizon,
            seed=_get(raw, "seed", "", int, 0),
            stabiliser=stab,
            reduction=_get(raw, "reduction", "", bool, False),
            output=dict(_table(raw, "output", required=False)),
        )


def make_grid_checked(a: float, b: float, n: int) -> Grid:
    try:
        return make_grid(a, b, n)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def warn_incompatible(label: str, u0: np.ndarray, scenario: Scenario, tol: float = 1.0e-2) -> bool:
    """Warn when ``A'(0) u0' - nu u0'' - h(0)`` is visibly non-zero at either boundary node."""
    grid, h = scenario.grid, scenario.grid.h
    a0 = float(scenario.flux.A_prime(np.array(0.0)))
    nu = scenario.cfg.nu
    hb = scenario.forcing.eval(0.0, np.array([grid.a, grid.b]))
    d1 = np.gradient(u0, h)
    d2 = np.gradient(d1, h)
    scale = 1.0 + abs(a0) * np.abs(d1).max() + nu * np.abs(d2).max() + np.abs(hb).max()
    # one-sided second-order stencils at the boundary nodes
    left = (-3 * u0[0] + 4 * u0[1] - u0[2]) / (2 * h), (2 * u0[0] - 5 * u0[1] + 4 * u0[2] - u0[3]) / h**2
    right = (3 * u0[-1] - 4 * u0[-2] + u0[-3]) / (2 * h), (2 * u0[-1] - 5 * u0[-2] + 4 * u0[-3] - u0[-4]) / h**2
    residuals = [a0 * du - nu * ddu - hv for (du, ddu), hv in zip((left, right), hb)]
    bad = max(abs(r) for r in residuals) > tol * scale
    if bad:
        logger.warning("%s does not satisfy the boundary compatibility conditions; proceeding anyway", label)
    return bool(bad)


def warn_sign_condition(scenario: Scenario, data_sup: float, horizon: int) -> bool:
    """Sample the sign condition on ``|u| <= 2 (|data|_inf + horizon sup|h(0)|) + 1``.

    The range is a rough a-priori envelope; the check is advisory.
    """
    grid = scenario.grid
    h0 = float(np.abs(scenario.forcing.eval(0.0, np.asarray(grid.x))).max())
    u_max = 2.0 * (data_sup + max(horizon, 1) * h0) + 1.0
    holds, worst = check_sign_condition(scenario.flux, u_max, 2001)
    if not holds:
        logger.warning("flux %r violates the sign condition on |u| <= %.3g (worst margin %.3g)",
                       scenario.flux.name, u_max, worst)
    return holds


def load_config(path: str | os.PathLike) -> ScenarioConfig:
    """Read a scenario file; ``path`` may also name a shipped scenario (e.g. ``s1``)."""
    p = Path(path)
    if not p.exists():
        shipped = shipped_scenarios()
        if str(path) in shipped:
            return ScenarioConfig.from_dict(shipped[str(path)], ".")
        raise ConfigError(f"config file {path} not found (shipped scenarios: {', '.join(sorted(shipped))})")
    try:
        raw = tomli.loads(p.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return ScenarioConfig.from_dict(raw, p.parent)


def shipped_scenarios() -> dict[str, dict]:
    out = {}
    for entry in resources.files("stabctl.scenarios").iterdir():
        if entry.name.endswith(".toml"):
            out[entry.name[:-5]] = tomli.loads(entry.read_text())
    return out


def shipped_config(name: str) -> ScenarioConfig:
    return ScenarioConfig.from_dict(shipped_scenarios()[name], ".")


# }}}


# {{{ persistence


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g17(v: float) -> str:
    return format(float(v), ".17g")


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_g17(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    return obj


def json_text(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"


def export_trajectory(traj: Trajectory, out: Path, config: Mapping, stride: int = 1, sigma: float = 0.25) -> None:
    """``trajectory.csv`` (t, x, u) plus a ``trajectory.json`` sidecar with config and norms."""
    idx = list(range(0, traj.times.size, max(1, stride)))
    if idx[-1] != traj.times.size - 1:
        idx.append(traj.times.size - 1)
    x = traj.grid.x
    rows = ((traj.times[j], xv, uv) for j in idx for xv, uv in zip(x, traj.states[j]))
    atomic_write(out / "trajectory.csv", csv_text(["t", "x", "u"], rows))
    norms = [
        {"t": float(traj.times[j]), "l1": norm_l1(traj.states[j], traj.grid),
         "sup": float(np.abs(traj.states[j]).max())}
        for j in idx
    ]
    atomic_write(out / "trajectory.json", json_text({"config": config, "norms": norms, "schema_version": SCHEMA_VERSION}))


# }}}


# {{{ runs


@dataclass
class RunResult:
    config: dict
    calibration: dict | None
    result: StabilisationResult
    decay_fit: dict | None
    checks: dict
    timing: dict

    @property
    def failed(self) -> bool:
        return self.result.failure is not None

    def decay_rows(self):
        r = self.result
        return [(k, d, s, c) for k, (d, s, c) in enumerate(zip(r.d_l1, r.d_sup, r.d_c2sigma))]

    def to_dict(self) -> dict:
        r = self.result
        failure = None
        if r.failure is not None:
            failure = {"window": r.failure.window, "time": r.failure.time, "message": str(r.failure)}
        return {
            "config": self.config,
            "calibration": self.calibration,
            "schedule": r.schedule.to_list(),
            "decay_fit": self.decay_fit,
            "checks": self.checks,
            "timing": self.timing,
            "failure": failure,
            "schema_version": SCHEMA_VERSION,
        }


def resolve_params(cfg: ScenarioConfig, seed: int | None = None) -> tuple[StabiliserParams, dict | None]:
    stab = cfg.stabiliser
    seed = cfg.seed if seed is None else seed
    if stab.get("mode", "calibrate") == "calibrate":
        params, report = calibrate(
            cfg.scenario,
            cfg.uhat0,
            int(stab.get("probe_count", 8)),
            seed=seed,
            theta=float(stab.get("theta", 0.5)),
            amplitude=float(stab.get("probe_amplitude", 0.5)),
        )
        return params, report.to_dict()
    try:
        params = StabiliserParams(
            K=float(stab["K"]),
            kappa=float(stab["kappa"]),
            theta=float(stab.get("theta", 0.5)),
            q=float(stab.get("q", 0.75)),
            delta=float(stab.get("delta", 0.1)),
            pulse_enabled=bool(stab.get("pulse_enabled", True)),
        )
    except KeyError as exc:
        raise ConfigError(f"stabiliser.{exc.args[0]}: missing (required with mode = 'fixed')") from None
    except ValueError as exc:
        raise ConfigError(f"stabiliser: {exc}") from exc
    return params, None


def resolved_config(cfg: ScenarioConfig, params: StabiliserParams, seed: int) -> dict:
    out = copy.deepcopy(cfg.raw)
    out["seed"] = seed
    out["stabiliser"] = {**cfg.stabiliser, "resolved": params.to_dict()}
    return out


def _decay_fit(result: StabilisationResult) -> dict | None:
    t = np.asarray(result.t)
    d = np.asarray(result.d_l1)
    try:
        return fit_decay((t, d)).to_dict()
    except FitError as exc:
        return {"error": str(exc)}


def run_stabilise(
    config: ScenarioConfig | str | os.PathLike,
    out: str | os.PathLike | None = None,
    seed: int | None = None,
) -> RunResult:
    """Calibrate (if requested) and stabilise; write results under ``out`` when given."""
    cfg = config if isinstance(config, ScenarioConfig) else load_config(config)
    seed = cfg.seed if seed is None else seed
    t_start = time.perf_counter()
    params, calibration = resolve_params(cfg, seed)
    t_cal = time.perf_counter()
    result = stabilise(cfg.u0, cfg.uhat0, cfg.horizon, cfg.scenario, params, reduction=cfg.reduction)
    t_run = time.perf_counter()

    shape = cfg.scenario.shape
    checks: dict[str, Any] = {
        "q1_bound": result.params.contraction_bound(shape),
        "q1_observed": result.max_ratio(),
        "neither_count": sum(b == NEITHER for b in result.branches),
        "pulse_count": sum(b == "pulse" for b in result.branches),
        "schedule_violations": check_schedule(result.schedule, result.params.K),
        "completed_windows": len(result.schedule.windows),
    }
    if result.u is not None:
        checks["max_principle_margin_u"] = max_principle_margin(result.u)
        checks["max_principle_margin_uhat"] = max_principle_margin(result.uhat)
    run = RunResult(
        config=resolved_config(cfg, result.params, seed),
        calibration=calibration,
        result=result,
        decay_fit=_decay_fit(result),
        checks=checks,
        timing={"calibrate_s": t_cal - t_start, "stabilise_s": t_run - t_cal},
    )
    if out is not None:
        write_run(run, Path(out), cfg)
    return run


def write_run(run: RunResult, out: Path, cfg: ScenarioConfig | None = None) -> None:
    r = run.result
    atomic_write(out / "decay.csv", csv_text(["k", "d_l1", "d_sup", "d_c2sigma"], run.decay_rows()))
    if r.u is not None:
        times = r.u.times
        xi = r.schedule.sample(times)
    else:
        times, xi = np.asarray(r.t), np.zeros(len(r.t))
    atomic_write(out / "control.csv", csv_text(["t", "xi"], zip(times, xi)))
    atomic_write(out / "result.json", json_text(run.to_dict()))
    if cfg is not None and cfg.output.get("trajectory") and r.u is not None:
        export_trajectory(r.u, out, run.config, int(cfg.output.get("stride", 40)))


def run_calibrate(config, out=None, seed: int | None = None) -> dict:
    cfg = config if isinstance(config, ScenarioConfig) else load_config(config)
    seed = cfg.seed if seed is None else seed
    params, report = resolve_params(cfg, seed)
    doc = {
        "config": resolved_config(cfg, params, seed),
        "params": params.to_dict(),
        "calibration": report,
        "q1_bound": params.contraction_bound(cfg.scenario.shape),
        "schema_version": SCHEMA_VERSION,
    }
    if out is not None:
        atomic_write(Path(out) / "calibration.json", json_text(doc))
    return doc


def run_approx_control(
    config,
    epsilon: float,
    out=None,
    seed: int | None = None,
    metric: str = "c2sigma",
    horizon: int | None = None,
) -> dict:
    """Stabilise until the distance drops below ``epsilon`` and stays there for one full window.

    ``metric`` is ``"c2sigma"`` (discrete C^{2+sigma} norm) or ``"l1"``.
    """
    if metric not in ("c2sigma", "l1"):
        raise ConfigError(f"metric must be 'c2sigma' or 'l1', got {metric!r}")
    if epsilon < 0 or not math.isfinite(epsilon):
        raise ConfigError(f"epsilon must be a finite non-negative number, got {epsilon}")
    cfg = config if isinstance(config, ScenarioConfig) else load_config(config)
    seed = cfg.seed if seed is None else seed
    horizon = cfg.horizon if horizon is None else horizon
    sc = cfg.scenario
    params, _ = resolve_params(cfg, seed)
    res = stabilise(
        cfg.u0, cfg.uhat0, horizon + 1, sc, params,
        reduction=cfg.reduction, record_c2sigma=metric == "c2sigma", stop_below=-1.0,
    )

    def dist(w):
        return norm_l1(w, sc.grid) if metric == "l1" else norm_c2sigma(w, sc.grid, sc.sigma)

    ends = res.d_l1 if metric == "l1" else res.d_c2sigma
    completed = len(res.schedule.windows)
    report: dict[str, Any] = {
        "epsilon": epsilon, "metric": metric, "horizon": horizon, "hit": False,
        "T": None, "persisted": None, "window_max": None,
        "closing_distance": float(np.min(ends[: horizon + 1])),
        "window_distances": list(ends),
        "failure": None if res.failure is None else str(res.failure),
    }
    for k in range(min(horizon, completed) + 1):
        if not ends[k] < epsilon:
            continue
        report.update(hit=True, T=float(k))
        if k + 1 <= completed:
            sel = (res.u.times >= k - 1e-12) & (res.u.times <= k + 1 + 1e-12)
            window_max = max(dist(u - uh) for u, uh in zip(res.u.states[sel], res.uhat.states[sel]))
            report.update(persisted=bool(window_max < epsilon), window_max=float(window_max))
        break
    if out is not None:
        atomic_write(Path(out) / "approx_control.json", json_text(report))
    return report


# }}}
