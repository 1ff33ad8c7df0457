"""Exception types shared across the package."""

from __future__ import annotations


class DriftAdaptError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DriftAdaptError):
    """Invalid configuration value, unknown key, or unusable CLI argument."""


class StageError(DriftAdaptError):
    """A pipeline stage could not run (missing inputs, failed prerequisite)."""


class DataFormatError(StageError):
    """An input file does not conform to the documented CSV/JSON schema."""


class SchemaError(DriftAdaptError):
    """Feature schema mismatch between artifacts that must agree."""


class DimensionError(DriftAdaptError):
    """Array shapes are incompatible with the requested operation."""


class LinalgError(DriftAdaptError):
    """Base class for numerical linear-algebra failures."""


class NotSymmetricError(LinalgError):
    """Matrix expected to be symmetric is not, beyond tolerance."""


class NotPositiveDefiniteError(LinalgError):
    """Cholesky factorization hit a non-positive pivot.

    ``pivot`` is the 1-based index of the failing diagonal entry.
    """

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = int(pivot)
        if message is None:
            message = f"matrix is not positive definite (pivot {self.pivot})"
        super().__init__(message)


class ConvergenceError(LinalgError):
    """Iterative solver exhausted its sweep/iteration budget."""


class DivergenceError(DriftAdaptError):
    """Training produced a non-finite loss.

    ``epoch`` is the 0-based epoch at which the loss stopped being finite.
    """

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = int(epoch)
        if message is None:
            message = f"non-finite training loss at epoch {self.epoch}"
        super().__init__(message)


class DegenerateTestError(DriftAdaptError):
    """Statistical test is undefined for the given sample (zero variance, n < 2)."""


class ReportError(DriftAdaptError):
    """Report assembly failed (missing baseline rows, inconsistent inputs)."""
