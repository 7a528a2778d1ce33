from __future__ import annotations

from typing import Any


class TriplePointError(Exception):
    """Base class for all exceptions raised by the lab."""

    message: str

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class ScenarioError(TriplePointError):
    """The scenario data itself is invalid: bad exponents, units, or evaluation outside the
    domain where the oriented factors are positive.
    """


class InvalidExponentError(ScenarioError):
    """Exception raised when a Darboux exponent is not strictly positive."""


class InvalidUnitError(ScenarioError):
    """Exception raised when the unit factor Δ vanishes at the origin."""


class DomainError(ScenarioError):
    """Exception raised when a point lies outside the domain of an evaluation, e.g. on the zero
    set of an oriented factor or on the boundary of a chart domain.
    """

    factor_index: int | str | None
    """Index of the offending factor (0 is the unfolding factor), `"unit"` for Δ, or None when
    the violated domain is not a factor (chart domains, logarithms).
    """

    def __init__(self, message: str, factor_index: int | str | None = None):
        super().__init__(message)
        self.factor_index = factor_index


class NumericalError(TriplePointError):
    """A numerical procedure failed to reach its tolerance or its preconditions."""


class NoCenterError(NumericalError):
    """Exception raised when the Newton search for the nest center diverges."""


class NotACenterError(NumericalError):
    """Exception raised when the critical point found is not a nondegenerate maximum of H."""


class RangeError(NumericalError):
    """Exception raised when a level value lies outside the nest range (0, n(λ))."""


class NonClosureError(NumericalError):
    """Exception raised when continuation does not return to its start within the step budget.
    Usually the level is too close to the polycycle.
    """


class PrecisionLossError(NumericalError):
    """Exception raised when quadrature cannot reach its tolerance."""

    achieved: float
    """The error bound that was achieved after the maximal refinement."""

    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


class OracleFailureError(NumericalError):
    """Exception raised when the interior (Stokes) quadrature does not converge."""


class SeriesPointError(NumericalError):
    """Exception raised when one point of an integral series fails."""

    index: int
    """Index into the h-grid of the failing point."""

    cause: TriplePointError
    """The underlying error."""

    def __init__(self, index: int, cause: TriplePointError):
        super().__init__(f"Series point {index} failed: {cause.message}")
        self.index = index
        self.cause = cause


class DegeneracyError(NumericalError):
    """Exception raised when a linearization is not diagonalizable."""


class ModelMismatchError(NumericalError):
    """Exception raised when a fitted model does not reproduce its data."""

    residual: Any
    """The residual (scalar or profile) that exceeded the threshold."""

    def __init__(self, message: str, residual: Any):
        super().__init__(message)
        self.residual = residual


class ConditioningError(NumericalError):
    """Exception raised when a least-squares basis is numerically collinear."""


class UnsupportedContinuationError(NumericalError):
    """Exception raised when a variation is requested on data without an analytic model."""


class NoisySeriesError(NumericalError):
    """Exception raised when too much of a series sits inside its quadrature error band."""


class OnContourZeroError(NumericalError):
    """Exception raised when a sampled value on an argument-principle path is (nearly) zero."""


class UntrustedBoundError(NumericalError):
    """Exception raised when an argument bound is requested outside the fitted model's window."""


class EscapeError(NumericalError):
    """Exception raised when a perturbed trajectory leaves the nest or never returns."""


class ArtifactError(TriplePointError):
    """Exception raised for unreadable or inconsistent artifact files."""


class SchemaMismatchError(ArtifactError):
    """Exception raised when two CSV artifacts don't share a column schema."""
