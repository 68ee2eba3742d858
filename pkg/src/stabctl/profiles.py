"""Named analytic profiles for initial data and forcing.

A profile is a mapping with a ``family`` key, or ``{"parts": [...]}``
summing several profiles:

* ``sin``: ``terms = [[m, amp], ...]`` gives ``sum amp sin(m pi (x-a)/(b-a))``
* ``bump``: ``amplitude``, ``center``, ``width``; smooth, compactly supported, peak ``amplitude``
* ``polynomial``: ``amplitude``, ``power`` (default 2); ``amplitude (4 (x-a)(b-x) / (b-a)^2)^power``
* ``zero``
"""

from __future__ import annotations

from typing import Any, Callable, Mapping

import numpy as np

from stabctl.errors import ConfigError
from stabctl.grid import Grid, bump


def _num(table: Mapping, key: str, where: str, default: float | None = None) -> float:
    if key not in table:
        if default is None:
            raise ConfigError(f"{where}.{key}: missing")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def profile_fn(table: Mapping[str, Any], grid: Grid, where: str = "profile") -> Callable[[np.ndarray], np.ndarray]:
    """Build ``x -> values`` from a profile table."""
    if not isinstance(table, Mapping):
        raise ConfigError(f"{where}: expected a table, got {table!r}")
    if "parts" in table:
        parts = table["parts"]
        if not isinstance(parts, list) or not parts:
            raise ConfigError(f"{where}.parts: expected a non-empty list of profiles")
        fns = [profile_fn(p, grid, f"{where}.parts[{i}]") for i, p in enumerate(parts)]
        return lambda x: sum(f(x) for f in fns)

    family = table.get("family")
    a, L = grid.a, grid.length
    if family == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if family == "sin":
        terms = table.get("terms")
        if not isinstance(terms, list) or not terms:
            raise ConfigError(f"{where}.terms: expected a list of [mode, amplitude] pairs")
        pairs = []
        for i, t in enumerate(terms):
            if not (isinstance(t, list) and len(t) == 2 and int(t[0]) == t[0] and t[0] >= 1):
                raise ConfigError(f"{where}.terms[{i}]: expected [positive integer mode, amplitude]")
            pairs.append((int(t[0]), float(t[1])))
        return lambda x: sum(amp * np.sin(m * np.pi * (np.asarray(x) - a) / L) for m, amp in pairs)
    if family == "bump":
        amp = _num(table, "amplitude", where)
        c = _num(table, "center", where)
        w = _num(table, "width", where)
        if w <= 0 or c - w / 2 < grid.a or c + w / 2 > grid.b:
            raise ConfigError(f"{where}: bump [{c - w / 2}, {c + w / 2}] must lie inside the domain")
        return lambda x: amp * np.e * bump(x, c - w / 2, c + w / 2)
    if family == "polynomial":
        amp = _num(table, "amplitude", where)
        p = _num(table, "power", where, 2.0)
        return lambda x: amp * (4.0 * (np.asarray(x) - a) * (grid.b - np.asarray(x)) / L**2) ** p
    raise ConfigError(f"{where}.family: unknown profile family {family!r} (sin, bump, polynomial, zero)")


def sample_profile(table: Mapping[str, Any], grid: Grid, where: str = "profile") -> np.ndarray:
    return grid.sample(profile_fn(table, grid, where))
