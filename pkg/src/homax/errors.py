"""Exception types shared across the package.

Each maps to a CLI exit status: parameter and region problems exit with 1,
numerical divergence with 2, and file problems with 3.
"""

from __future__ import annotations


class HomaxError(Exception):
    exit_code = 1


class ParameterError(HomaxError, ValueError):
    """Invalid input value (mesh size, parameter outside its domain, ...)."""

    exit_code = 1


class RegionError(HomaxError):
    """Parameters outside the admissible region, or a bracket that never closes."""

    exit_code = 1


class DivergenceError(HomaxError, ArithmeticError):
    """A limit, integral or iteration that fails to converge."""

    exit_code = 2

    def __init__(self, message: str, trace: list[float] | None = None):
        super().__init__(message)
        self.trace = list(trace or [])


class CaseMismatchError(DivergenceError):
    """An integral required by the selected case diverges for these parameters."""
