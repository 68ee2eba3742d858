from __future__ import annotations

import csv
import json
import textwrap

import numpy as np
import pytest

from stabctl.errors import ConfigError
from stabctl.harness import (
    SCHEMA_VERSION,
    ScenarioConfig,
    atomic_write,
    csv_text,
    load_config,
    run_approx_control,
    run_calibrate,
    run_stabilise,
    shipped_scenarios,
)

SMALL = """
name = "small"
nu = 0.05
flux = "burgers"
horizon = 4
pi = [0.4, 0.6]
seed = 7

[grid]
a = 0.0
b = 1.0
n = 60

[uhat0]
family = "sin"
terms = [[1, 0.2]]

[u0]
family = "sin"
terms = [[1, 0.2], [2, 0.4]]

[solver]
dt = 0.01

[stabiliser]
mode = "calibrate"
probe_count = 3
"""


def write_config(tmp_path, text=SMALL, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def replace_line(text, old, new):
    assert old in text
    return text.replace(old, new)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# {{{ configuration


def test_shipped_scenarios_load():
    names = shipped_scenarios()
    assert {"s1", "s2", "s3", "s4", "s5"} <= set(names)
    for name in names:
        cfg = load_config(name)
        assert cfg.u0.shape == cfg.uhat0.shape == (cfg.scenario.grid.n + 2,)
        assert cfg.u0[0] == cfg.u0[-1] == 0.0


def test_s1_matches_stated_setup():
    cfg = load_config("s1")
    sc = cfg.scenario
    assert sc.cfg.nu == 0.1 and sc.flux.name == "burgers" and sc.grid.n == 400
    assert sc.pi == (0.4, 0.6) and sc.forcing.is_zero
    x = np.asarray(sc.grid.x)
    np.testing.assert_allclose(cfg.uhat0[1:-1], 0.3 * np.sin(np.pi * x[1:-1]), atol=1e-15)
    np.testing.assert_allclose(cfg.u0 - cfg.uhat0, sc.grid.sample(lambda x: 0.5 * np.sin(2 * np.pi * x)), atol=1e-15)


@pytest.mark.parametrize(
    "old, new, match",
    [
        ('flux = "burgers"', 'flux = "cubicz"', "unknown flux model"),
        ("n = 60", "n = 2", "grid"),
        ("nu = 0.05", "nu = -1.0", "nu"),
        ('family = "sin"\nterms = [[1, 0.2]]', 'family = "spline"', "unknown profile family"),
        ("pi = [0.4, 0.6]", "pi = [0.6, 0.4]", "pi"),
        ("dt = 0.01", 'dt = "small"', "solver.dt"),
        ('mode = "calibrate"', 'mode = "guess"', "stabiliser.mode"),
        ("pi = [0.4, 0.6]", "pi = [0.4, 0.6]\nsigma = 0.6", "sigma"),
    ],
)
def test_config_errors(tmp_path, old, new, match):
    with pytest.raises(ConfigError, match=match):
        load_config(write_config(tmp_path, replace_line(SMALL, old, new)))


def test_toml_syntax_error_reports_line(tmp_path):
    with pytest.raises(ConfigError, match="line 3"):
        load_config(write_config(tmp_path, 'name = "x"\nnu = 0.1\nflux = \n'))


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/scenario.toml")


def test_tabulated_forcing(tmp_path):
    (tmp_path / "h.csv").write_text("t,x,h\n0,0,0\n0,1,2\n0.5,0,1\n0.5,1,1\n")
    text = SMALL + '\n[forcing]\nkind = "tabulated"\nfile = "h.csv"\n'
    cfg = load_config(write_config(tmp_path, text))
    f = cfg.scenario.forcing
    np.testing.assert_allclose(f.eval(0.1, np.array([0.5])), [1.0])
    assert f.breakpoints == (0.5,)


def test_tabulated_forcing_incomplete(tmp_path):
    (tmp_path / "h.csv").write_text("t,x,h\n0,0,0\n0,1,2\n0.5,0,1\n")
    text = SMALL + '\n[forcing]\nkind = "tabulated"\nfile = "h.csv"\n'
    with pytest.raises(ConfigError, match="complete"):
        load_config(write_config(tmp_path, text))


def test_fixed_mode_requires_constants(tmp_path):
    text = replace_line(SMALL, 'mode = "calibrate"\nprobe_count = 3', 'mode = "fixed"\nK = 1.0')
    cfg = load_config(write_config(tmp_path, text))
    with pytest.raises(ConfigError, match="kappa"):
        run_stabilise(cfg)


# }}}


# {{{ runs and files


def test_stabilise_outputs(tmp_path):
    out = tmp_path / "out"
    run = run_stabilise(write_config(tmp_path), out)
    decay = read_csv(out / "decay.csv")
    assert decay[0] == ["k", "d_l1", "d_sup", "d_c2sigma"]
    assert len(decay) - 1 == run.checks["completed_windows"] + 1
    # 17 significant digits round-trip exactly
    assert float(decay[1][1]) == run.result.d_l1[0]
    control = read_csv(out / "control.csv")
    assert control[0] == ["t", "xi"] and len(control) - 1 == run.result.u.times.size
    doc = json.loads((out / "result.json").read_text())
    assert {"config", "calibration", "schedule", "decay_fit", "checks", "timing", "schema_version"} <= set(doc)
    assert doc["schema_version"] == SCHEMA_VERSION == "1"
    assert doc["config"]["stabiliser"]["resolved"]["K"] == run.result.params.K
    assert not list(out.glob(".*.tmp"))


def test_identical_data_writes_zeros(tmp_path):
    text = replace_line(SMALL, "terms = [[1, 0.2], [2, 0.4]]", "terms = [[1, 0.2]]")
    out = tmp_path / "out"
    run_stabilise(write_config(tmp_path, text), out)
    for row in read_csv(out / "decay.csv")[1:]:
        assert all(float(v) == 0.0 for v in row[1:])
    for row in read_csv(out / "control.csv")[1:]:
        assert float(row[1]) == 0.0


def test_determinism(tmp_path):
    cfg = write_config(tmp_path)
    run_stabilise(cfg, tmp_path / "a", seed=11)
    run_stabilise(cfg, tmp_path / "b", seed=11)
    for name in ("decay.csv", "control.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    a = json.loads((tmp_path / "a" / "result.json").read_text())
    b = json.loads((tmp_path / "b" / "result.json").read_text())
    a.pop("timing"), b.pop("timing")
    assert a == b and a["config"]["seed"] == 11


def test_trajectory_export(tmp_path):
    text = SMALL + "\n[output]\ntrajectory = true\nstride = 50\n"
    out = tmp_path / "out"
    run = run_stabilise(write_config(tmp_path, text), out)
    rows = read_csv(out / "trajectory.csv")
    assert rows[0] == ["t", "x", "u"]
    n_nodes = run.result.u.grid.n + 2
    assert (len(rows) - 1) % n_nodes == 0
    side = json.loads((out / "trajectory.json").read_text())
    assert side["norms"][-1]["t"] == run.result.u.times[-1]


def test_calibrate_output(tmp_path):
    doc = run_calibrate(write_config(tmp_path), tmp_path / "cal")
    saved = json.loads((tmp_path / "cal" / "calibration.json").read_text())
    assert saved["params"]["K"] == doc["params"]["K"] > 0
    assert 0 < saved["q1_bound"] < 1


def test_approx_control_trivial_targets(tmp_path):
    cfg = write_config(tmp_path)
    big = run_approx_control(cfg, 1e6, metric="l1")
    assert big["hit"] and big["T"] == 0.0 and big["persisted"]
    zero = run_approx_control(cfg, 0.0, metric="l1")
    assert not zero["hit"] and zero["T"] is None
    assert zero["closing_distance"] > 0


def test_approx_control_c2sigma_metric(tmp_path):
    report = run_approx_control(write_config(tmp_path), 1e6, tmp_path / "ac")
    assert report["metric"] == "c2sigma" and report["T"] == 0.0
    assert json.loads((tmp_path / "ac" / "approx_control.json").read_text())["hit"]


@pytest.mark.parametrize("eps, metric", [(-1.0, "l1"), (float("nan"), "l1"), (1.0, "h1")])
def test_approx_control_rejects(tmp_path, eps, metric):
    with pytest.raises(ConfigError):
        run_approx_control(write_config(tmp_path), eps, metric=metric)


def test_blow_up_is_recorded(tmp_path):
    text = SMALL + '\n[forcing]\nkind = "analytic"\ntime = "constant"\nprofile = {family = "bump", amplitude = 1e12, center = 0.5, width = 0.2}\n'
    cfg = load_config(write_config(tmp_path, replace_line(text, 'mode = "calibrate"\nprobe_count = 3',
                                                          'mode = "fixed"\nK = 1.0\nkappa = 0.1')))
    run = run_stabilise(cfg, tmp_path / "out")
    assert run.failed and run.result.failure.window == 1
    doc = json.loads((tmp_path / "out" / "result.json").read_text())
    assert doc["failure"]["window"] == 1


def test_atomic_write_and_csv(tmp_path):
    atomic_write(tmp_path / "d" / "f.csv", csv_text(["a", "b"], [(0.1, "x"), (np.float64(1 / 3), 2)]))
    assert (tmp_path / "d" / "f.csv").read_text() == "a,b\n0.10000000000000001,x\n0.33333333333333331,2\n"
    assert [p.name for p in (tmp_path / "d").iterdir()] == ["f.csv"]


def test_scenario_config_from_dict_round_trip():
    raw = shipped_scenarios()["s2"]
    cfg = ScenarioConfig.from_dict(raw)
    assert cfg.raw == raw and cfg.raw is not raw


# }}}
