"""Exception hierarchy shared by all stabctl modules."""

from __future__ import annotations


class StabctlError(Exception):
    """Base class for every error raised by the package."""


class DomainError(StabctlError, ValueError):
    """Invalid geometric or parametric input (bad interval, empty support, ...)."""


class FluxModelError(StabctlError):
    """A flux model produced non-finite values."""


class NumericalError(StabctlError):
    """A linear solve or other numerical kernel failed."""


class BlowUpError(NumericalError):
    """The solution left the admissible range during time stepping."""

    def __init__(self, message: str, time: float, window: int | None = None):
        super().__init__(message)
        self.time = time
        self.window = window


class FitError(StabctlError):
    """Not enough usable data for a decay fit."""


class ConfigError(StabctlError):
    """A scenario configuration could not be parsed or resolved."""
