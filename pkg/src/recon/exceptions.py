"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ReconError(Exception):
    """Base class for all package errors."""


class InputError(ReconError, ValueError):
    """Malformed or inconsistent user input (files, configs, dimensions)."""


class DegenerateModelError(ReconError, ArithmeticError):
    """A parameter point yields a singular innovation covariance or similar.

    Callers estimating the model treat this as a minus-infinity likelihood
    and reject the point.
    """


class ConvergenceError(ReconError, ArithmeticError):
    """An iterative solver failed to reach its tolerance."""


class SamplerError(ReconError, RuntimeError):
    """The Gibbs sampler could not make progress."""
