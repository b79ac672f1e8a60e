"""Exception hierarchy shared by all geoselect modules."""

from __future__ import annotations


class GeoSelectError(Exception):
    """Base class for errors raised by geoselect."""


class DataError(GeoSelectError):
    """Input data cannot be used (bad values, malformed rows, ...)."""


class DegenerateSites(DataError):
    """Two or more sampling sites coincide."""

    def __init__(self, pairs):
        self.pairs = list(pairs)
        shown = ", ".join(f"({i}, {j})" for i, j in self.pairs[:5])
        super().__init__(f"duplicate sampling sites at index pairs {shown}")


class RankDeficientDesign(DataError):
    """The covariate matrix does not have full column rank."""


class InvalidParameter(GeoSelectError, ValueError):
    """A covariance, taper or penalty parameter is out of range."""


class NotPositiveDefinite(GeoSelectError):
    """Cholesky factorization hit a non-positive pivot.

    Attributes
    ----------
    index : int
        Zero-based row (in factorization order) where the failure occurred.
    pivot : float
        Value of the offending pivot, i.e. the Schur complement entry that
        should have been positive.
    """

    def __init__(self, index: int, pivot: float):
        self.index = int(index)
        self.pivot = float(pivot)
        super().__init__(
            f"matrix is not positive definite: pivot {self.pivot:.6g} at row {self.index}"
        )


class NonConvergence(GeoSelectError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message: str, trace=None):
        self.trace = list(trace) if trace is not None else []
        super().__init__(message)


class TuningFailed(GeoSelectError):
    """Every candidate penalty level failed to fit."""

    def __init__(self, errors):
        self.errors = dict(errors)
        super().__init__(f"all {len(self.errors)} penalty levels failed")
