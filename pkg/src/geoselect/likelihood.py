"""Gaussian log-likelihood of the spatial linear model and its derivatives.

Three variants share one code path:

``full``
    exact covariance, no taper.
``tapered``
    covariance replaced by its Hadamard product with the taper matrix.
``tapered_alt``
    tapered log-determinant, quadratic form taken with
    ``inv(Gamma_T) * Delta`` (elementwise).

Covariance parameters are always ordered ``(r, c, sigma2)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceSpec, DenseCholesky, TaperSpec
from .data import Geometry, SpatialDataset
from .exceptions import InvalidParameter, RankDeficientDesign

__all__ = [
    "LikelihoodVariant",
    "ModelState",
    "InformationMatrices",
    "Evaluation",
    "loglik",
    "score_theta",
    "gls_beta",
    "profile_sigma2",
    "information",
    "profiled_loglik",
]

LOG_2PI = float(np.log(2.0 * np.pi))


class LikelihoodVariant(str, enum.Enum):
    FULL = "full"
    TAPERED = "tapered"
    TAPERED_ALT = "tapered_alt"

    @classmethod
    def parse(cls, value) -> "LikelihoodVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).replace("-", "_"))
        except ValueError:
            raise InvalidParameter(f"unknown likelihood variant {value!r}") from None


def check_variant(variant, taper: TaperSpec) -> LikelihoodVariant:
    variant = LikelihoodVariant.parse(variant)
    if variant is LikelihoodVariant.FULL and not taper.is_none:
        raise InvalidParameter("variant 'full' requires taper 'none'")
    return variant


@dataclass(frozen=True)
class ModelState:
    beta: np.ndarray
    theta: CovarianceSpec

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(beta)):
            raise InvalidParameter("beta must be finite")
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class InformationMatrices:
    info_beta: np.ndarray
    info_theta: np.ndarray


class Evaluation:
    """One factorization of the (tapered) covariance at fixed theta.

    Everything downstream (log-determinant, quadratic forms, whitening,
    inverses) reuses this object.
    """

    def __init__(self, geom: Geometry, r, c, sigma2, variant: LikelihoodVariant):
        self.geom = geom
        self.theta = (float(r), float(c), float(sigma2))
        self.factor = geom.factor(r, c, sigma2)
        self.alt = variant is LikelihoodVariant.TAPERED_ALT and geom.delta is not None
        self._inverse = None
        if self.alt:
            self.weight = self.inverse() * geom.delta
            self._wchol = DenseCholesky(self.weight)

    @property
    def logdet(self) -> float:
        return self.factor.logdet

    def inverse(self) -> np.ndarray:
        if self._inverse is None:
            self._inverse = self.factor.inverse()
        return self._inverse

    def whiten(self, m):
        """Map ``m`` so that inner products become ``m^T W m``."""
        if self.alt:
            return self._wchol.lower.T @ m
        return self.factor.whiten(m)

    def precision(self, v):
        """``W v`` where W is the quadratic-form matrix of the variant."""
        if self.alt:
            return self.weight @ v
        return self.factor.solve(v)

    def loglik(self, resid) -> float:
        w = self.whiten(resid)
        n = resid.shape[0]
        return -0.5 * (n * LOG_2PI + self.logdet + float(w @ w))


def _evaluate(data: SpatialDataset, theta, variant, taper) -> Evaluation:
    variant = check_variant(variant, taper)
    if not isinstance(theta, CovarianceSpec):
        theta = CovarianceSpec(*theta)
    return Evaluation(data.geometry(taper), theta.r, theta.c, theta.sigma2, variant)


def loglik(data: SpatialDataset, state: ModelState, variant, taper: TaperSpec) -> float:
    ev = _evaluate(data, state.theta, variant, taper)
    return ev.loglik(data.y - data.X @ state.beta)


def score_theta(data: SpatialDataset, state: ModelState, variant, taper: TaperSpec) -> np.ndarray:
    """Gradient of :func:`loglik` with respect to ``(r, c, sigma2)``.

    Uses the exact derivative of the inverse, ``-A G_k A``, so the result is
    the true gradient of the tapered objective for every variant.
    """
    ev = _evaluate(data, state.theta, variant, taper)
    resid = data.y - data.X @ state.beta
    a = ev.inverse()
    grads = ev.geom.derivatives(*ev.theta)
    out = np.empty(3)
    if ev.alt:
        outer = np.outer(resid, resid) * ev.geom.delta
        for k, g in enumerate(grads):
            out[k] = -0.5 * np.sum(a * g) + 0.5 * np.sum((a @ g @ a) * outer)
    else:
        u = ev.factor.solve(resid)
        for k, g in enumerate(grads):
            out[k] = -0.5 * np.sum(a * g) + 0.5 * u @ g @ u
    return out


def _gls(ev: Evaluation, X, y):
    xw = ev.whiten(X)
    yw = ev.whiten(y)
    beta, _, rank, _ = np.linalg.lstsq(xw, yw, rcond=None)
    if rank < X.shape[1]:
        raise RankDeficientDesign(f"design has rank {rank} < {X.shape[1]} columns")
    return beta, xw, yw


def gls_beta(data: SpatialDataset, theta, variant, taper: TaperSpec) -> np.ndarray:
    """Generalized least squares coefficients under the variant's weight matrix."""
    ev = _evaluate(data, theta, variant, taper)
    return _gls(ev, data.X, data.y)[0]


def profile_sigma2(data: SpatialDataset, beta, r, c, variant, taper: TaperSpec) -> float:
    """``N^-1 resid^T W(r, c, sigma2=1) resid``."""
    ev = _evaluate(data, (r, c, 1.0), variant, taper)
    w = ev.whiten(data.y - data.X @ np.asarray(beta, dtype=float))
    return float(w @ w) / data.n


def information(data: SpatialDataset, state: ModelState, variant, taper: TaperSpec) -> InformationMatrices:
    """Expected information blocks for beta and theta."""
    ev = _evaluate(data, state.theta, variant, taper)
    return _information(ev, data.X)


def _information(ev: Evaluation, X) -> InformationMatrices:
    xw = ev.whiten(X)
    info_beta = xw.T @ xw
    a = ev.inverse()
    prods = [a @ g for g in ev.geom.derivatives(*ev.theta)]
    info_theta = np.empty((3, 3))
    for k in range(3):
        for j in range(k, 3):
            info_theta[k, j] = info_theta[j, k] = 0.5 * np.sum(prods[k] * prods[j].T)
    return InformationMatrices(info_beta, info_theta)


def profiled_loglik(geom: Geometry, X, y, r, c, variant, beta=None):
    """Log-likelihood maximized over sigma2 (and beta, unless given).

    Returns ``(value, beta, sigma2)``.  ``X`` may be an empty ``(N, 0)``
    matrix, in which case the residual is ``y`` itself.
    """
    ev = Evaluation(geom, r, c, 1.0, variant)
    n = y.shape[0]
    if beta is None:
        if X.shape[1]:
            beta, xw, yw = _gls(ev, X, y)
            resid = yw - xw @ beta
        else:
            beta = np.zeros(0)
            resid = ev.whiten(y)
    else:
        resid = ev.whiten(y - X @ beta)
    sigma2 = float(resid @ resid) / n
    value = -0.5 * (n * (LOG_2PI + 1.0 + np.log(sigma2)) + ev.logdet)
    return value, beta, sigma2
