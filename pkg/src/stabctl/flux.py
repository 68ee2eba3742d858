"""Scalar flux models and the sign condition

    A'(u) sgn(u) >= c |u| - C

that keeps solutions in an a-priori bounded set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from stabctl.errors import ConfigError, DomainError, FluxModelError

ScalarMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FluxModel:
    """Flux ``A`` with derivative and the constants of the sign condition.

    ``split`` optionally holds the Engquist-Osher decomposition
    ``A = A_plus + A_minus`` with ``A_plus' = max(A', 0)`` and
    ``A_minus' = min(A', 0)``; it is what the upwind scheme uses.
    """

    name: str
    A: ScalarMap
    A_prime: ScalarMap
    sign_c: float
    sign_C: float
    split: tuple[ScalarMap, ScalarMap] | None = None


def _zero(u):
    return np.zeros_like(np.asarray(u, dtype=float))


def burgers_flux() -> FluxModel:
    return FluxModel(
        "burgers",
        A=lambda u: 0.5 * np.square(u),
        A_prime=lambda u: np.asarray(u, dtype=float) * 1.0,
        sign_c=1.0,
        sign_C=1.0,
        split=(
            lambda u: 0.5 * np.square(np.maximum(u, 0.0)),
            lambda u: 0.5 * np.square(np.minimum(u, 0.0)),
        ),
    )


def quartic_flux() -> FluxModel:
    """``A(u) = u^4/4 + u^2/2``; ``A'(u) = u^3 + u`` grows superlinearly with the sign of ``u``."""

    def A(u):
        u = np.asarray(u, dtype=float)
        return 0.25 * u**4 + 0.5 * u**2

    def A_plus(u):
        return A(np.maximum(u, 0.0))

    def A_minus(u):
        return A(np.minimum(u, 0.0))

    return FluxModel(
        "quartic",
        A=A,
        A_prime=lambda u: np.asarray(u, dtype=float) ** 3 + np.asarray(u, dtype=float),
        sign_c=1.0,
        sign_C=1.0,
        split=(A_plus, A_minus),
    )


def linear_flux() -> FluxModel:
    """``A(u) = u``.

    The sign condition only holds on a bounded range here: ``sgn(u) >= 0.01|u| - 2``
    for ``|u| <= 100``, which covers every shipped scenario.
    """
    return FluxModel(
        "linear",
        A=lambda u: np.asarray(u, dtype=float) * 1.0,
        A_prime=lambda u: np.ones_like(np.asarray(u, dtype=float)),
        sign_c=0.01,
        sign_C=2.0,
        split=(lambda u: np.asarray(u, dtype=float) * 1.0, _zero),
    )


def zero_flux() -> FluxModel:
    """``A = 0``: pure heat equation.  Not a sign-condition model (``c`` is nominal)."""
    return FluxModel("zero", A=_zero, A_prime=_zero, sign_c=1.0, sign_C=1.0, split=(_zero, _zero))


MODELS: dict[str, Callable[[], FluxModel]] = {
    "burgers": burgers_flux,
    "quartic": quartic_flux,
    "linear": linear_flux,
}

# models that can be named in a scenario; "zero" is for heat-equation checks only
SCENARIO_MODELS: dict[str, Callable[[], FluxModel]] = {**MODELS, "zero": zero_flux}


def get_flux(name: str) -> FluxModel:
    try:
        return SCENARIO_MODELS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown flux model {name!r}; known: {', '.join(sorted(SCENARIO_MODELS))}"
        ) from None


def check_sign_condition(model: FluxModel, u_max: float, samples: int) -> tuple[bool, float]:
    """Sample ``A'(u) sgn(u) - (c|u| - C)`` on ``[-u_max, u_max]``.

    Returns ``(holds, worst_margin)``.
    """
    if not u_max > 0:
        raise DomainError(f"u_max must be positive, got {u_max}")
    if samples < 2:
        raise DomainError(f"need at least 2 samples, got {samples}")
    u = np.linspace(-u_max, u_max, int(samples))
    with np.errstate(all="ignore"):
        margin = model.A_prime(u) * np.sign(u) - (model.sign_c * np.abs(u) - model.sign_C)
    if not np.all(np.isfinite(margin)):
        raise FluxModelError(f"flux {model.name!r} produced non-finite A' on [-{u_max}, {u_max}]")
    worst = float(margin.min())
    return worst >= 0.0, worst


def check_derivative(model: FluxModel, u: np.ndarray, eps: float = 1.0e-5) -> float:
    """Largest relative gap between ``A'`` and central differences of ``A``."""
    u = np.asarray(u, dtype=float)
    fd = (model.A(u + eps) - model.A(u - eps)) / (2.0 * eps)
    exact = model.A_prime(u)
    return float(np.max(np.abs(exact - fd) / np.maximum(np.abs(exact), 1.0)))
