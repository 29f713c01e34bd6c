"""
Exception hierarchy shared by the library and the command-line surface.
"""
from __future__ import annotations

from typing import Any, Optional


class RbsimError(Exception):
    """Base class for every error raised by rbsim."""

    exit_code = 1


class ValidationError(RbsimError, ValueError):
    """Bad argument or unmet precondition."""

    exit_code = 4


class ConfigError(RbsimError):
    """Unreadable or schema-invalid configuration, or an unwritable output location."""

    exit_code = 2


class NumericalError(RbsimError):
    """A numerical procedure failed to meet its tolerance."""

    exit_code = 3


class QuadratureError(NumericalError):
    pass


class DecompositionError(NumericalError):
    pass


class ConstructionError(NumericalError):
    """Clifford group closure produced an inconsistent result."""


class FitError(NumericalError):
    """Curve fit did not converge or the input is degenerate."""

    def __init__(self, message: str, last_iterate: Optional[Any] = None) -> None:
        super().__init__(message)
        self.last_iterate = last_iterate


class InvariantFailure(RbsimError):
    """A check of the validation suite did not hold."""

    exit_code = 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, RbsimError):
        return exc.exit_code
    return 1
