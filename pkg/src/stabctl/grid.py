"""Uniform 1D grids with homogeneous Dirichlet boundary and the control bump.

Fields are plain ``numpy`` arrays of length ``n + 2`` holding nodal values,
boundary nodes included.  Dirichlet fields carry exact zeros at both ends.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from stabctl.errors import DomainError

# relative slack when deciding whether a node lies inside a closed interval
_NODE_TOL = 1.0e-12


@dataclass(frozen=True)
class Grid:
    a: float
    b: float
    n: int

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n + 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = self.a + self.h * np.arange(self.n + 2)
        x[-1] = self.b
        x.setflags(write=False)
        return x

    @property
    def length(self) -> float:
        return self.b - self.a

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n + 2)

    def sample(self, fn, *, dirichlet: bool = True) -> np.ndarray:
        """Evaluate ``fn`` at the nodes; zero the boundary values if requested."""
        values = np.asarray(fn(self.x), dtype=float) * np.ones(self.n + 2)
        if dirichlet:
            values[0] = values[-1] = 0.0
        return values

    def nodes_in(self, p1: float, p2: float) -> np.ndarray:
        """Boolean mask of nodes inside the closed interval ``[p1, p2]``."""
        tol = _NODE_TOL * self.length
        return (self.x >= p1 - tol) & (self.x <= p2 + tol)


def make_grid(a: float, b: float, n: int) -> Grid:
    if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
        raise DomainError(f"need a < b, got a={a}, b={b}")
    if int(n) != n or n < 3:
        raise DomainError(f"need at least 3 interior nodes, got n={n}")
    return Grid(float(a), float(b), int(n))


def apply_dirichlet(values: np.ndarray) -> np.ndarray:
    values[0] = values[-1] = 0.0
    return values


def trapezoid(values: np.ndarray, grid: Grid) -> float:
    return float(grid.h * (values.sum() - 0.5 * (values[0] + values[-1])))


def bump(x: np.ndarray, p1: float, p2: float) -> np.ndarray:
    """Standard mollifier supported on ``[p1, p2]``, equal to ``1/e`` at the centre."""
    x = np.asarray(x, dtype=float)
    r = (2.0 * x - p1 - p2) / (p2 - p1)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@dataclass(frozen=True)
class ControlShape:
    """Fixed spatial profile of the one-dimensional control."""

    grid: Grid
    support: tuple[float, float]
    values: np.ndarray = field(repr=False)
    l1_norm: float
    sup_norm: float


def make_bump(grid: Grid, p1: float, p2: float) -> ControlShape:
    if not (grid.a < p1 < p2 < grid.b):
        raise DomainError(
            f"control support ({p1}, {p2}) must satisfy a < p1 < p2 < b on [{grid.a}, {grid.b}]"
        )
    values = bump(grid.x, p1, p2)
    apply_dirichlet(values)
    values.setflags(write=False)
    l1 = trapezoid(values, grid)
    if l1 <= 0.0:
        raise DomainError(f"support ({p1}, {p2}) contains no grid node; refine the grid")
    return ControlShape(grid, (float(p1), float(p2)), values, l1, float(values.max()))


def restrict_inf(values: np.ndarray, grid: Grid, p1: float, p2: float) -> float:
    """Minimum of ``|values|`` over the nodes lying in ``[p1, p2]``."""
    if p1 > p2 or p1 < grid.a or p2 > grid.b:
        raise DomainError(f"[{p1}, {p2}] is not a subinterval of [{grid.a}, {grid.b}]")
    mask = grid.nodes_in(p1, p2)
    if not mask.any():
        raise DomainError(f"no grid node in [{p1}, {p2}]")
    return float(np.abs(values[mask]).min())
