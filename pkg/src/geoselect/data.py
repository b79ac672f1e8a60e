"""Spatial datasets and their per-taper geometry cache."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .covariance import (
    BandedPattern,
    DenseCholesky,
    SiteSet,
    TaperSpec,
    exponential_entries,
    pairwise_distances,
)
from .exceptions import DataError

__all__ = ["SpatialDataset", "Geometry"]


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    """Sites, covariates and response of one spatial regression problem.

    Parameters
    ----------
    coords : (N, d) array
    X : (N, p) array
    y : (N,) array
    names : covariate names, defaults to ``x1 .. xp``
    """

    coords: np.ndarray
    X: np.ndarray
    y: np.ndarray
    names: tuple = ()
    _geometry: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        sites = SiteSet(self.coords)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != sites.n or y.shape[0] != sites.n:
            raise DataError(
                f"row mismatch: {sites.n} sites, {X.shape[0]} covariate rows, {y.shape[0]} responses"
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("covariates and response must be finite")
        names = tuple(self.names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} names for {X.shape[1]} covariates")
        object.__setattr__(self, "coords", sites.coords)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @cached_property
    def distances(self) -> np.ndarray:
        return pairwise_distances(SiteSet(self.coords)).data

    def geometry(self, taper: TaperSpec) -> "Geometry":
        if taper not in self._geometry:
            self._geometry[taper] = Geometry(self.distances, taper)
        return self._geometry[taper]

    def subset(self, columns) -> "SpatialDataset":
        """Same sites and response restricted to the given covariate columns."""
        columns = list(columns)
        ds = SpatialDataset(self.coords, self.X[:, columns], self.y, tuple(self.names[j] for j in columns))
        ds.__dict__["distances"] = self.distances
        return ds


class Geometry:
    """Distances and taper weights for one (sites, taper) pair.

    For a linear taper the support pattern and its banded ordering are
    computed here once; :meth:`factor` then only fills values.
    """

    def __init__(self, dists: np.ndarray, taper: TaperSpec):
        self.dists = dists
        self.taper = taper
        self.n = dists.shape[0]
        if taper.is_none:
            self.delta = None
            self.pattern = None
            return
        self.delta = taper.weights(dists)
        rows, cols = np.nonzero(np.tril(dists < taper.omega))
        self._rows, self._cols = rows, cols
        self._sup_d = dists[rows, cols]
        self._sup_w = self.delta[rows, cols]
        self._sup_diag = rows == cols
        self.pattern = BandedPattern(rows, cols, self.n)

    def covariance(self, r, c, sigma2) -> np.ndarray:
        """Dense tapered covariance."""
        gamma = sigma2 * (1.0 - c) * np.exp(-self.dists / r)
        np.fill_diagonal(gamma, sigma2)
        if self.delta is not None:
            gamma *= self.delta
        return gamma

    def derivatives(self, r, c, sigma2):
        """Dense tapered derivatives of the covariance in (r, c, sigma2)."""
        e = np.exp(-self.dists / r)
        d_r = sigma2 * (1.0 - c) * (self.dists / r**2) * e
        d_c = -sigma2 * e
        np.fill_diagonal(d_c, 0.0)
        d_s = (1.0 - c) * e
        np.fill_diagonal(d_s, 1.0)
        out = [d_r, d_c, d_s]
        if self.delta is not None:
            out = [m * self.delta for m in out]
        return out

    def factor(self, r, c, sigma2):
        if self.pattern is None:
            return DenseCholesky(self.covariance(r, c, sigma2))
        vals = exponential_entries(self._sup_d, self._sup_diag, r, c, sigma2) * self._sup_w
        return self.pattern.factor(vals)
