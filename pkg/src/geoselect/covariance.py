"""Distances, exponential covariance matrices, tapering and Cholesky factors.

Dense matrices are plain ``numpy`` arrays wrapped in :class:`SymMatrix`.
Tapered matrices are stored as the lower triangle (diagonal included) in
compressed sparse column form.  Sparse factorization reorders the matrix with
reverse Cuthill-McKee and runs the LAPACK banded Cholesky on the result; the
ordering only depends on the sparsity pattern, so :class:`BandedPattern` can
be built once and reused for every parameter value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.spatial.distance import pdist, squareform

from .exceptions import DegenerateSites, InvalidParameter, NotPositiveDefinite

__all__ = [
    "SiteSet",
    "CovarianceSpec",
    "TaperSpec",
    "SymMatrix",
    "DenseCholesky",
    "BandedCholesky",
    "BandedPattern",
    "pairwise_distances",
    "exponential_entries",
    "build_covariance",
    "apply_taper",
    "factorize",
    "DUPLICATE_TOL",
]

DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class SiteSet:
    """N sampling sites in d dimensions, shape ``(N, d)``."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] < 1:
            raise InvalidParameter("coords must be a non-empty (N, d) array")
        if not np.all(np.isfinite(coords)):
            raise InvalidParameter("coords contain non-finite values")
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class CovarianceSpec:
    """Exponential covariance with nugget.

    ``gamma(0) = sigma2`` and ``gamma(d) = sigma2 * (1 - c) * exp(-d / r)``
    for ``d > 0``.
    """

    r: float
    c: float
    sigma2: float
    family: str = "exponential"

    def __post_init__(self):
        if self.family != "exponential":
            raise InvalidParameter(f"unsupported covariance family {self.family!r}")
        if not (np.isfinite(self.r) and self.r > 0):
            raise InvalidParameter(f"range r must be positive, got {self.r}")
        if not (np.isfinite(self.c) and 0.0 <= self.c < 1.0):
            raise InvalidParameter(f"nugget proportion c must lie in [0, 1), got {self.c}")
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise InvalidParameter(f"variance sigma2 must be positive, got {self.sigma2}")

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.r, self.c, self.sigma2])


@dataclass(frozen=True)
class TaperSpec:
    """Taper family (``"none"`` or ``"linear"``) and threshold distance."""

    family: str = "none"
    omega: float | None = None

    def __post_init__(self):
        if self.family == "none":
            if self.omega is not None:
                raise InvalidParameter("taper 'none' takes no omega")
        elif self.family == "linear":
            if self.omega is None or not np.isfinite(self.omega) or self.omega <= 0:
                raise InvalidParameter(f"taper omega must be positive, got {self.omega}")
            object.__setattr__(self, "omega", float(self.omega))
        else:
            raise InvalidParameter(f"unknown taper family {self.family!r}")

    @classmethod
    def none(cls) -> "TaperSpec":
        return cls("none")

    @classmethod
    def linear(cls, omega: float) -> "TaperSpec":
        return cls("linear", omega)

    @property
    def is_none(self) -> bool:
        return self.family == "none"

    def weights(self, d):
        """Taper value ``(1 - d/omega)_+`` (all ones for ``none``)."""
        d = np.asarray(d, dtype=float)
        if self.is_none:
            return np.ones_like(d)
        return np.maximum(1.0 - d / self.omega, 0.0)


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Symmetric matrix, dense or sparse-lower.

    ``data`` is either a full dense ``(n, n)`` array or a ``csc_matrix``
    holding the lower triangle including the diagonal.
    """

    data: object

    def __post_init__(self):
        if sp.issparse(self.data):
            object.__setattr__(self, "data", sp.csc_matrix(self.data))
        else:
            object.__setattr__(self, "data", np.asarray(self.data, dtype=float))

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def to_dense(self) -> np.ndarray:
        if not self.is_sparse:
            return self.data
        low = self.data.toarray()
        return low + np.tril(low, -1).T

    @property
    def offdiag_nnz(self) -> int:
        """Stored off-diagonal entries, counting each symmetric pair once."""
        if self.is_sparse:
            coo = self.data.tocoo()
            return int(np.count_nonzero(coo.row != coo.col))
        return int(np.count_nonzero(np.tril(self.data, -1)))


def pairwise_distances(sites) -> SymMatrix:
    """Euclidean distance matrix; raises :class:`DegenerateSites` on duplicates."""
    if not isinstance(sites, SiteSet):
        sites = SiteSet(sites)
    if sites.n == 1:
        return SymMatrix(np.zeros((1, 1)))
    condensed = pdist(sites.coords)
    if condensed.min() < DUPLICATE_TOL:
        d = squareform(condensed)
        i, j = np.nonzero(np.tril(d < DUPLICATE_TOL, -1))
        raise DegenerateSites(zip(j.tolist(), i.tolist()))
    return SymMatrix(squareform(condensed))


def exponential_entries(d, on_diagonal, r, c, sigma2):
    """Covariance values for lags ``d``; ``on_diagonal`` marks i == j entries."""
    vals = sigma2 * (1.0 - c) * np.exp(-np.asarray(d) / r)
    return np.where(on_diagonal, sigma2, vals)


def build_covariance(dists: SymMatrix, spec: CovarianceSpec) -> SymMatrix:
    """Covariance matrix on the stored entries of ``dists``."""
    if dists.is_sparse:
        coo = dists.data.tocoo()
        vals = exponential_entries(coo.data, coo.row == coo.col, spec.r, spec.c, spec.sigma2)
        return SymMatrix(sp.csc_matrix((vals, (coo.row, coo.col)), shape=coo.shape))
    d = dists.data
    gamma = spec.sigma2 * (1.0 - spec.c) * np.exp(-d / spec.r)
    np.fill_diagonal(gamma, spec.sigma2)
    return SymMatrix(gamma)


def apply_taper(gamma: SymMatrix, dists: SymMatrix, taper: TaperSpec) -> SymMatrix:
    """Hadamard product with the taper matrix; sparse-lower output for tapers."""
    if taper.is_none:
        return gamma
    d = dists.to_dense()
    g = gamma.to_dense()
    rows, cols = np.nonzero(np.tril(d < taper.omega))
    vals = g[rows, cols] * taper.weights(d[rows, cols])
    return SymMatrix(sp.csc_matrix((vals, (rows, cols)), shape=d.shape))


def _failed_pivot(a: np.ndarray, index: int) -> float:
    """Schur-complement pivot at ``index`` given a PD leading block."""
    if index == 0:
        return float(a[0, 0])
    lead = a[:index, :index]
    col = a[:index, index]
    return float(a[index, index] - col @ np.linalg.solve(lead, col))


class DenseCholesky:
    """Lower Cholesky factor ``A = L L^T`` of a dense SPD matrix."""

    def __init__(self, a: np.ndarray):
        a = np.asarray(a, dtype=float)
        low, info = lapack.dpotrf(a, lower=1, clean=1)
        if info > 0:
            raise NotPositiveDefinite(info - 1, _failed_pivot(a, info - 1))
        if info < 0:
            raise ValueError(f"dpotrf: illegal argument {-info}")
        self.lower = low
        self.n = a.shape[0]

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.size == 0:
            return b.copy()
        x, info = lapack.dpotrs(self.lower, b, lower=1)
        return x

    def whiten(self, b):
        """``L^{-1} b``, so that ``|whiten(b)|^2 = b^T A^{-1} b``."""
        b = np.asarray(b, dtype=float)
        if b.size == 0:
            return b.copy()
        x, info = lapack.dtrtrs(self.lower, b, lower=1)
        return x

    def correlate(self, z):
        """``L z``: maps standard normal draws to draws with covariance A."""
        return self.lower @ z

    def inverse(self) -> np.ndarray:
        inv, info = lapack.dpotri(self.lower, lower=1)
        return np.tril(inv) + np.tril(inv, -1).T

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


class BandedPattern:
    """Symbolic analysis of a sparse symmetric pattern.

    Computes a reverse Cuthill-McKee ordering and the position of every stored
    lower-triangle entry inside LAPACK lower band storage.
    """

    def __init__(self, rows, cols, n: int):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        full = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        full = full + full.T
        perm = np.asarray(reverse_cuthill_mckee(full, symmetric_mode=True), dtype=np.int64)
        iperm = np.empty_like(perm)
        iperm[perm] = np.arange(n)
        pr, pc = iperm[rows], iperm[cols]
        hi, lo = np.maximum(pr, pc), np.minimum(pr, pc)
        self.n = n
        self.perm = perm
        self.band_row = hi - lo
        self.band_col = lo
        self.bandwidth = int(self.band_row.max()) if rows.size else 0

    def factor(self, values) -> "BandedCholesky":
        ab = np.zeros((self.bandwidth + 1, self.n))
        ab[self.band_row, self.band_col] = values
        return BandedCholesky(ab, self.perm)


class BandedCholesky:
    """Cholesky factor of ``P A P^T`` in lower band storage."""

    def __init__(self, ab: np.ndarray, perm: np.ndarray):
        cb, info = lapack.dpbtrf(ab, lower=1)
        if info > 0:
            dense = _band_to_dense(ab)
            raise NotPositiveDefinite(info - 1, _failed_pivot(dense, info - 1))
        self.band = cb
        self.perm = perm
        self.n = ab.shape[1]

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(self.band[0])))

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.size == 0:
            return b.copy()
        vec = b.ndim == 1
        bp = b[self.perm].reshape(self.n, -1)
        x, info = lapack.dpbtrs(self.band, bp, lower=1)
        out = np.empty_like(x)
        out[self.perm] = x
        return out[:, 0] if vec else out

    def whiten(self, b):
        b = np.asarray(b, dtype=float)
        if b.size == 0:
            return b.copy()
        vec = b.ndim == 1
        bp = b[self.perm].reshape(self.n, -1)
        x, info = lapack.dtbtrs(self.band, bp, uplo="L")
        return x[:, 0] if vec else x

    def correlate(self, z):
        z = np.asarray(z, dtype=float)
        vec = z.ndim == 1
        z2 = z.reshape(self.n, -1)
        out = np.zeros_like(z2)
        for k in range(self.band.shape[0]):
            out[k:] += self.band[k, : self.n - k, None] * z2[: self.n - k]
        res = np.empty_like(out)
        res[self.perm] = out
        return res[:, 0] if vec else res

    def inverse(self) -> np.ndarray:
        inv = self.solve(np.eye(self.n))
        return 0.5 * (inv + inv.T)

    def reconstruct(self) -> np.ndarray:
        low = _band_to_dense(self.band, lower_only=True)
        a = low @ low.T
        out = np.empty_like(a)
        out[np.ix_(self.perm, self.perm)] = a
        return out


def _band_to_dense(ab, lower_only=False):
    kd, n = ab.shape[0] - 1, ab.shape[1]
    low = np.zeros((n, n))
    for k in range(kd + 1):
        idx = np.arange(n - k)
        low[idx + k, idx] = ab[k, : n - k]
    if lower_only:
        return low
    return low + np.tril(low, -1).T


def factorize(m: SymMatrix):
    """Cholesky factor: dense LAPACK for dense input, RCM + banded for sparse."""
    if not m.is_sparse:
        return DenseCholesky(m.data)
    coo = m.data.tocoo()
    low = coo.row >= coo.col
    pattern = BandedPattern(coo.row[low], coo.col[low], m.n)
    return pattern.factor(coo.data[low])
