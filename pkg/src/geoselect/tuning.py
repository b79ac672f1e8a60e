"""BIC selection of the SCAD penalty level."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import estimators as est
from .covariance import TaperSpec
from .data import SpatialDataset
from .exceptions import GeoSelectError, InvalidParameter, TuningFailed
from .likelihood import Evaluation, check_variant, profile_sigma2

__all__ = [
    "LambdaGrid",
    "LambdaRecord",
    "TuningResult",
    "bic_score",
    "lambda_max",
    "default_grid",
    "tune_lambda",
]


@dataclass(frozen=True)
class LambdaGrid:
    """Strictly increasing, nonnegative penalty levels."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise InvalidParameter("lambda grid is empty")
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise InvalidParameter("lambda grid values must be finite and >= 0")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise InvalidParameter("lambda grid must be strictly increasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def log_spaced(cls, lam_min: float, lam_max: float, size: int = 30) -> "LambdaGrid":
        if size == 1:
            return cls((lam_max,))
        return cls(tuple(np.geomspace(lam_min, lam_max, size)))

    def __len__(self):
        return len(self.values)


@dataclass
class LambdaRecord:
    lam: float
    k: int
    sigma2: float
    bic: float
    fit: est.FitResult


@dataclass
class TuningResult:
    records: list
    chosen_lam: float
    best: est.FitResult
    init: est.FitResult
    grid: LambdaGrid
    errors: dict = field(default_factory=dict)


def bic_score(data: SpatialDataset, fit: est.FitResult, variant=None, taper: TaperSpec | None = None,
              covariance: str = "fit", theta=None) -> float:
    """``N log sigma2_hat + k log N`` with sigma2 profiled at fixed (r, c).

    ``theta`` supplies the correlation parameters; by default the fit's own.
    ``covariance="fit"`` evaluates sigma2 under the fit's variant and taper,
    ``"full"`` under the untapered covariance.
    """
    sigma2 = bic_sigma2(data, fit, variant, taper, covariance, theta)
    k = int(np.count_nonzero(fit.beta_hat))
    return data.n * math.log(sigma2) + k * math.log(data.n)


def bic_sigma2(data, fit, variant=None, taper=None, covariance="fit", theta=None) -> float:
    if fit.model == "iid":
        resid = data.y - data.X @ fit.beta_hat
        return float(resid @ resid) / data.n
    if covariance == "full":
        variant, taper = "full", TaperSpec.none()
    elif covariance == "fit":
        variant = fit.variant if variant is None else variant
        taper = fit.taper if taper is None else taper
    else:
        raise InvalidParameter(f"unknown BIC covariance {covariance!r}")
    r, c = (fit.theta_hat if theta is None else theta)[:2]
    return profile_sigma2(data, fit.beta_hat, r, c, variant, taper)


def lambda_max(xw, yw, init_beta, a: float = 3.7) -> float:
    """Smallest lambda for which the one-step estimate is identically zero.

    With SCAD weights the zero vector is optimal iff
    ``|xw_j' yw| <= N * p'_lambda(|beta0_j|)`` for every j; each side is
    monotone in lambda, so the bound is solved per coordinate.
    """
    n = xw.shape[0]
    t = np.abs(xw.T @ yw) / n
    b = np.abs(np.asarray(init_beta, dtype=float))
    lam = np.where(t >= b, t, ((a - 1.0) * t + b) / a)
    lam = np.where(t == 0, 0.0, lam)
    return float(lam.max()) if lam.size else 0.0


def _whitened(data, init, variant, taper, model):
    if model == "iid":
        scale = math.sqrt(init.theta_hat[2])
        return data.X / scale, data.y / scale
    ev = Evaluation(data.geometry(taper), *init.theta_hat, variant)
    return ev.whiten(data.X), ev.whiten(data.y)


def default_grid(data, init, variant="full", taper=None, a=3.7, size=30, min_ratio=1e-3, model="spatial") -> LambdaGrid:
    """``size`` log-spaced values from ``min_ratio * lam_max`` to ``lam_max``."""
    taper = taper or TaperSpec.none()
    xw, yw = _whitened(data, init, check_variant(variant, taper), taper, model)
    top = lambda_max(xw, yw, init.beta_hat, a)
    if top <= 0:
        top = 1.0
    return LambdaGrid.log_spaced(min_ratio * top, top, size)


def tune_lambda(data: SpatialDataset, variant="full", taper: TaperSpec | None = None, grid: LambdaGrid | None = None,
                cfg=None, a: float = 3.7, model: str = "spatial", init: est.FitResult | None = None,
                bic_covariance: str = "fit", bic_theta: str = "initial", grid_size: int = 30,
                min_ratio: float = 1e-3) -> TuningResult:
    """Fit the one-step estimator along a lambda grid and keep the BIC minimizer.

    The initializer is computed once (or taken from ``init``) and shared by
    every grid point.  With ``bic_theta="initial"`` every candidate is scored
    under the initializer's correlation parameters, so all BIC values use one
    common covariance; ``"fitted"`` uses each candidate's updated (r, c).
    Ties go to the larger lambda.
    """
    taper = taper or TaperSpec.none()
    cfg = cfg or est.OptimizerConfig()
    if model not in ("spatial", "iid"):
        raise InvalidParameter(f"unknown model {model!r}")
    if bic_theta not in ("initial", "fitted"):
        raise InvalidParameter(f"unknown BIC theta source {bic_theta!r}")
    variant = check_variant(variant, taper)
    if init is None:
        init = est.fit_ols(data) if model == "iid" else est.fit_mle(data, variant, taper, cfg)
    if grid is None:
        grid = default_grid(data, init, variant, taper, a, grid_size, min_ratio, model)

    bic_at = init.theta_hat if bic_theta == "initial" else None
    cache = {}
    records, errors = [], {}
    for lam in grid.values:
        pen = est.PenaltySpec(lam, a)
        try:
            if model == "iid":
                fit = est.fit_baseline_iid(data, pen, cfg, init=init)
            else:
                fit = est.fit_ose(data, variant, taper, pen, cfg, init=init, theta_cache=cache)
            sigma2 = bic_sigma2(data, fit, covariance=bic_covariance, theta=bic_at)
        except GeoSelectError as exc:
            errors[lam] = exc
            continue
        score = data.n * math.log(sigma2) + fit.k * math.log(data.n)
        fit.bic = score
        records.append(LambdaRecord(lam, fit.k, sigma2, score, fit))
    if not records:
        raise TuningFailed(errors)
    best = min(records, key=lambda rec: (rec.bic, -rec.lam))
    return TuningResult(records, best.lam, best.fit, init, grid, errors)
