from __future__ import annotations

import csv
import subprocess
import sys

import pytest

from stabctl.cli import main

from test_harness import SMALL, write_config


def test_stabilise_exit_zero(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["stabilise", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "2"]) == 0
    assert "windows=" in capsys.readouterr().out
    assert (tmp_path / "o" / "result.json").exists()


def test_unknown_flux_exit_two(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL.replace('flux = "burgers"', 'flux = "cubicz"'))
    assert main(["stabilise", "--config", str(cfg)]) == 2
    assert "unknown flux model" in capsys.readouterr().err


def test_usage_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as info:
        main(["stabilise"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
    assert main(["verify", "--suite", "nope"]) == 2


def test_numerical_failure_exit_one(tmp_path):
    text = SMALL.replace('mode = "calibrate"\nprobe_count = 3', 'mode = "fixed"\nK = 1.0\nkappa = 0.1')
    text += '\n[forcing]\nkind = "analytic"\nprofile = {family = "bump", amplitude = 1e12, center = 0.5, width = 0.2}\n'
    assert main(["stabilise", "--config", str(write_config(tmp_path, text))]) == 1


def test_approx_control_exit_codes(tmp_path):
    cfg = str(write_config(tmp_path))
    assert main(["approx-control", "--config", cfg, "--epsilon", "1e6", "--metric", "l1"]) == 0
    assert main(["approx-control", "--config", cfg, "--epsilon", "0", "--metric", "l1"]) == 1


def test_calibrate_verb(tmp_path):
    assert main(["calibrate", "--config", str(write_config(tmp_path)), "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "calibration.json").exists()


def test_verify_writes_csv(tmp_path):
    assert main(["verify", "--suite", "gns", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "verify_gns.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["case", "margin", "tolerance", "pass"]
    assert all(r[3] == "true" for r in rows[1:])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stabctl", "verify", "--suite", "nope"], capture_output=True, text=True)
    assert proc.returncode == 2 and "unknown suite" in proc.stderr
