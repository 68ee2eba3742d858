from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stabctl.harness import resolve_params, run_stabilise, shipped_config

settings.register_profile(
    "stabctl", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("stabctl")


@pytest.fixture(scope="session")
def s1_config():
    return shipped_config("s1")


@pytest.fixture(scope="session")
def s1_params(s1_config):
    return resolve_params(s1_config)[0]


@pytest.fixture(scope="session")
def s1_run(s1_config):
    return run_stabilise(s1_config)


@pytest.fixture(scope="session")
def s2_run():
    return run_stabilise(shipped_config("s2"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        entries = ACCEPTANCE[number]
        ok = all(e[0] for e in entries)
        detail = "; ".join(e[1] for e in entries)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
