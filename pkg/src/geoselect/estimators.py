"""MLE, one-step sparse (OSE) and penalized (PMLE) estimators.

Covariance parameters are optimized on the unconstrained scale
``(log r, logit c)`` with a Nelder-Mead simplex; beta and sigma2 are
profiled out in closed form at every simplex vertex.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .covariance import TaperSpec
from .data import SpatialDataset
from .exceptions import InvalidParameter, NonConvergence, NotPositiveDefinite, RankDeficientDesign
from .likelihood import (
    LOG_2PI,
    Evaluation,
    LikelihoodVariant,
    _information,
    check_variant,
    profiled_loglik,
)

__all__ = [
    "PenaltySpec",
    "OptimizerConfig",
    "FitResult",
    "scad_penalty",
    "scad_deriv",
    "weighted_lasso",
    "fit_mle",
    "fit_ose",
    "fit_pmle",
    "fit_baseline_iid",
    "update_theta",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PenaltySpec:
    lam: float
    a: float = 3.7

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise InvalidParameter(f"lambda must be >= 0, got {self.lam}")
        if not self.a > 2:
            raise InvalidParameter(f"SCAD shape a must exceed 2, got {self.a}")


@dataclass(frozen=True)
class OptimizerConfig:
    """Numerical settings for all estimators.

    ``tol`` is the relative objective change at which a simplex run stops;
    ``restarts`` fresh simplices are launched from the best point found.
    Warm-started theta updates (beta held fixed) use ``warm_restarts``.
    """

    max_iters: int = 400
    tol: float = 1e-9
    xtol: float = 1e-4
    restarts: int = 2
    warm_restarts: int = 0
    simplex_step: float = 0.5
    warm_step: float = 0.15
    c_floor: float = 1e-6
    r_bounds: tuple = (1e-3, 1e2)  # multiples of the largest site separation
    cd_tol: float = 1e-8
    cd_max_sweeps: int = 10_000
    pmle_max_iters: int = 50
    pmle_tol: float = 1e-6

    def __post_init__(self):
        if self.tol <= 0 or self.xtol <= 0 or self.cd_tol <= 0 or self.pmle_tol <= 0:
            raise InvalidParameter("tolerances must be positive")
        if self.max_iters < 1 or self.cd_max_sweeps < 1 or self.pmle_max_iters < 1:
            raise InvalidParameter("iteration limits must be positive")


@dataclass
class FitResult:
    """Estimates from one fit.

    ``se_beta`` has one entry per covariate and is NaN for coefficients that
    were shrunk to zero.  For the i.i.d. baseline ``theta_hat[:2]`` is NaN.
    """

    beta_hat: np.ndarray
    theta_hat: np.ndarray
    selected: tuple
    se_beta: np.ndarray
    se_theta: np.ndarray
    loglik: float
    bic: float
    variant: LikelihoodVariant
    taper: TaperSpec
    method: str
    lam: float | None = None
    a: float | None = None
    names: tuple = ()
    model: str = "spatial"
    diagnostics: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.selected)


def scad_penalty(beta_abs, pen: PenaltySpec):
    """SCAD penalty value (vectorized)."""
    b = np.abs(np.asarray(beta_abs, dtype=float))
    lam, a = pen.lam, pen.a
    mid = lam**2 + (a * lam * b - b**2 / 2 - a * lam**2 + lam**2 / 2) / (a - 1)
    out = np.where(b <= lam, lam * b, np.where(b <= a * lam, mid, (a + 1) * lam**2 / 2))
    return out if out.ndim else float(out)


def scad_deriv(beta_abs, pen: PenaltySpec):
    """Derivative of the SCAD penalty in ``|beta|`` (vectorized)."""
    b = np.abs(np.asarray(beta_abs, dtype=float))
    lam, a = pen.lam, pen.a
    out = np.where(b <= lam, lam, np.maximum(a * lam - b, 0.0) / (a - 1))
    return out if out.ndim else float(out)


def weighted_lasso(xw, yw, weights, n_scale, cfg: OptimizerConfig | None = None):
    """Minimize ``0.5 |yw - xw b|^2 + n_scale * sum_j w_j |b_j|``.

    Cyclic coordinate descent with exact soft-thresholding; coordinates whose
    threshold is met exactly are set to zero.
    """
    cfg = cfg or OptimizerConfig()
    xw = np.asarray(xw, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise InvalidParameter("lasso weights must be nonnegative")
    gram = xw.T @ xw
    corr = xw.T @ np.asarray(yw, dtype=float)
    thresh = n_scale * weights
    p = gram.shape[0]
    beta = np.zeros(p)
    for sweep in range(cfg.cd_max_sweeps):
        max_step = 0.0
        for j in range(p):
            if gram[j, j] <= 0:
                continue
            z = corr[j] - gram[j] @ beta + gram[j, j] * beta[j]
            if abs(z) <= thresh[j]:
                new = 0.0
            else:
                new = math.copysign(abs(z) - thresh[j], z) / gram[j, j]
            max_step = max(max_step, abs(new - beta[j]))
            beta[j] = new
        if max_step < cfg.cd_tol:
            return beta
    raise NonConvergence(f"coordinate descent did not converge in {cfg.cd_max_sweeps} sweeps")


def _to_unconstrained(r, c, cfg):
    return np.array([math.log(r), float(logit(min(max(c, cfg.c_floor), 1 - cfg.c_floor)))])


def _from_unconstrained(u):
    return math.exp(u[0]), float(expit(u[1]))


def _bounds(data, cfg):
    dmax = float(data.distances.max()) if data.n > 1 else 1.0
    lo, hi = cfg.r_bounds
    c_lo, c_hi = float(logit(cfg.c_floor)), float(logit(1 - cfg.c_floor))
    return [(math.log(lo * dmax), math.log(hi * dmax)), (c_lo, c_hi)]


def _simplex_search(fun, u0, bounds, cfg, step, restarts):
    """Nelder-Mead with restarts; returns ``(u, f, trace)``."""
    trace = []
    u, f = np.asarray(u0, dtype=float), fun(u0)
    trace.append((u.tolist(), f))
    for run in range(restarts + 1):
        simplex = np.vstack([u, u, u])
        for k, (lo, hi) in enumerate(bounds):
            simplex[k + 1, k] += step if u[k] + step <= hi else -step
        res = minimize(
            fun,
            u,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "initial_simplex": simplex,
                "xatol": cfg.xtol,
                "fatol": cfg.tol * max(1.0, abs(f)) if np.isfinite(f) else cfg.tol,
                "maxfev": cfg.max_iters,
            },
        )
        trace.append((res.x.tolist(), float(res.fun), int(res.nfev), bool(res.success)))
        improved = f - res.fun
        if res.fun < f:
            u, f = np.asarray(res.x), float(res.fun)
        if not res.success:
            continue
        if improved <= cfg.tol * max(1.0, abs(f)):
            break
    if not np.isfinite(f):
        raise NonConvergence("covariance optimizer found no finite objective", trace)
    if not trace[-1][3]:
        raise NonConvergence("covariance optimizer hit its evaluation limit", trace)
    return u, f, trace


def _objective(geom, X, y, variant, beta=None):
    def fun(u):
        r, c = _from_unconstrained(u)
        try:
            value, _, _ = profiled_loglik(geom, X, y, r, c, variant, beta)
        except NotPositiveDefinite:
            return np.inf
        return -value if np.isfinite(value) else np.inf

    return fun


def update_theta(data: SpatialDataset, beta, variant, taper: TaperSpec, start, cfg=None):
    """Maximize the log-likelihood over theta with beta held fixed.

    Returns ``(theta, loglik, trace)``; never worse than ``start``.
    """
    cfg = cfg or OptimizerConfig()
    variant = check_variant(variant, taper)
    geom = data.geometry(taper)
    fun = _objective(geom, data.X, data.y, variant, np.asarray(beta, dtype=float))
    u, f, trace = _simplex_search(fun, _to_unconstrained(start[0], start[1], cfg), _bounds(data, cfg), cfg, cfg.warm_step, cfg.warm_restarts)
    r, c = _from_unconstrained(u)
    _, _, sigma2 = profiled_loglik(geom, data.X, data.y, r, c, variant, np.asarray(beta, dtype=float))
    return np.array([r, c, sigma2]), -f, trace


def _standard_errors(data, beta, theta, selected, variant, taper):
    ev = Evaluation(data.geometry(taper), *theta, variant)
    info = _information(ev, data.X[:, list(selected)])
    se_beta = np.full(data.p, np.nan)
    if selected:
        se_beta[list(selected)] = np.sqrt(np.diag(np.linalg.inv(info.info_beta)))
    try:
        se_theta = np.sqrt(np.diag(np.linalg.inv(info.info_theta)))
    except np.linalg.LinAlgError:
        se_theta = np.full(3, np.nan)
    return se_beta, se_theta, ev


def _bic(n, sigma2, k):
    return n * math.log(sigma2) + k * math.log(n)


def _initial_range(data):
    return float(data.distances.max()) / 4.0 if data.n > 1 else 1.0


def fit_mle(data: SpatialDataset, variant="full", taper: TaperSpec | None = None, cfg=None, active=None) -> FitResult:
    """Maximum (tapered) likelihood estimate.

    ``active`` restricts the regression to a subset of covariates; the others
    are fixed at zero (used for oracle fits on a known support).
    """
    taper = taper or TaperSpec.none()
    cfg = cfg or OptimizerConfig()
    variant = check_variant(variant, taper)
    active = tuple(range(data.p)) if active is None else tuple(sorted(active))
    if data.n <= len(active):
        raise RankDeficientDesign(f"need N > p, got N={data.n}, p={len(active)}")
    geom = data.geometry(taper)
    Xa = data.X[:, list(active)]
    ols = np.linalg.lstsq(Xa, data.y, rcond=None) if active else (np.zeros(0),)
    resid0 = data.y - Xa @ ols[0]
    start = (_initial_range(data), 0.1, float(resid0 @ resid0) / data.n)

    fun = _objective(geom, Xa, data.y, variant)
    u, f, trace = _simplex_search(fun, _to_unconstrained(start[0], start[1], cfg), _bounds(data, cfg), cfg, cfg.simplex_step, cfg.restarts)
    r, c = _from_unconstrained(u)
    value, beta_a, sigma2 = profiled_loglik(geom, Xa, data.y, r, c, variant)
    beta = np.zeros(data.p)
    beta[list(active)] = beta_a
    theta = np.array([r, c, sigma2])
    se_beta, se_theta, _ = _standard_errors(data, beta, theta, active, variant, taper)
    return FitResult(
        beta_hat=beta,
        theta_hat=theta,
        selected=active,
        se_beta=se_beta,
        se_theta=se_theta,
        loglik=value,
        bic=_bic(data.n, sigma2, len(active)),
        variant=variant,
        taper=taper,
        method="MLE",
        names=data.names,
        diagnostics={"start_theta": list(start), "optimizer_trace": trace},
    )


def _lla_step(data, init_beta, init_theta, variant, taper, pen, cfg):
    """One local-linear-approximation step: whiten at theta, solve weighted lasso."""
    ev = Evaluation(data.geometry(taper), *init_theta, variant)
    xw = ev.whiten(data.X)
    yw = ev.whiten(data.y)
    weights = scad_deriv(np.abs(init_beta), pen)
    return weighted_lasso(xw, yw, weights, data.n, cfg), weights


def _penalized_fit(data, beta, theta, variant, taper, pen, method, cfg, diagnostics, theta_trace):
    selected = tuple(int(j) for j in np.flatnonzero(beta))
    se_beta, se_theta, ev = _standard_errors(data, beta, theta, selected, variant, taper)
    value = ev.loglik(data.y - data.X @ beta)
    diagnostics = dict(diagnostics, theta_trace=theta_trace)
    return FitResult(
        beta_hat=beta,
        theta_hat=theta,
        selected=selected,
        se_beta=se_beta,
        se_theta=se_theta,
        loglik=value,
        bic=_bic(data.n, theta[2], len(selected)),
        variant=variant,
        taper=taper,
        method=method,
        lam=pen.lam,
        a=pen.a,
        names=data.names,
        diagnostics=diagnostics,
    )


def fit_ose(data: SpatialDataset, variant="full", taper: TaperSpec | None = None, pen: PenaltySpec | None = None,
            cfg=None, init: FitResult | None = None, theta_cache: dict | None = None) -> FitResult:
    """One-step sparse estimate initialized at the (tapered) MLE.

    ``init`` supplies a precomputed initializer; ``theta_cache`` memoizes the
    theta update by the exact bytes of the fitted beta.
    """
    taper = taper or TaperSpec.none()
    cfg = cfg or OptimizerConfig()
    pen = pen or PenaltySpec(0.0)
    variant = check_variant(variant, taper)
    if init is None:
        init = fit_mle(data, variant, taper, cfg)
    beta, weights = _lla_step(data, init.beta_hat, init.theta_hat, variant, taper, pen, cfg)
    key = beta.tobytes()
    if theta_cache is not None and key in theta_cache:
        theta, trace = theta_cache[key]
    else:
        theta, _, trace = update_theta(data, beta, variant, taper, init.theta_hat, cfg)
        if theta_cache is not None:
            theta_cache[key] = (theta, trace)
    diagnostics = {"weights": weights.tolist(), "init_theta": init.theta_hat.tolist(), "init_beta": init.beta_hat.tolist()}
    return _penalized_fit(data, beta, theta, variant, taper, pen, "OSE", cfg, diagnostics, trace)


def penalized_objective(data, beta, theta, variant, taper, pen) -> float:
    """Log-likelihood minus ``N * sum_j p_lambda(|beta_j|)``."""
    ev = Evaluation(data.geometry(taper), *theta, check_variant(variant, taper))
    return ev.loglik(data.y - data.X @ beta) - data.n * float(np.sum(scad_penalty(np.abs(beta), pen)))


def fit_pmle(data: SpatialDataset, variant="full", taper: TaperSpec | None = None, pen: PenaltySpec | None = None,
             cfg=None, init: FitResult | None = None) -> FitResult:
    """Penalized MLE by iterating the LLA step to convergence.

    Each iteration re-derives the weights from the current beta, re-whitens
    with the current theta, solves the weighted lasso and updates theta.
    """
    taper = taper or TaperSpec.none()
    cfg = cfg or OptimizerConfig()
    pen = pen or PenaltySpec(0.0)
    variant = check_variant(variant, taper)
    if init is None:
        init = fit_mle(data, variant, taper, cfg)
    beta, theta = init.beta_hat.copy(), init.theta_hat.copy()
    objective = [penalized_objective(data, beta, theta, variant, taper, pen)]
    violations = []
    converged = False
    trace = []
    for it in range(cfg.pmle_max_iters):
        new_beta, weights = _lla_step(data, beta, theta, variant, taper, pen, cfg)
        new_theta, _, trace = update_theta(data, new_beta, variant, taper, theta, cfg)
        q = penalized_objective(data, new_beta, new_theta, variant, taper, pen)
        if q < objective[-1] - 1e-8 * max(1.0, abs(objective[-1])):
            violations.append(it)
            log.warning("PMLE objective decreased at iteration %d: %.12g -> %.12g", it, objective[-1], q)
        objective.append(q)
        old = np.concatenate([beta, theta])
        new = np.concatenate([new_beta, new_theta])
        beta, theta = new_beta, new_theta
        if np.linalg.norm(new - old) <= cfg.pmle_tol * max(1.0, np.linalg.norm(old)):
            converged = True
            break
    if not converged and cfg.pmle_max_iters > 1:
        raise NonConvergence(f"PMLE did not converge in {cfg.pmle_max_iters} iterations", objective)
    diagnostics = {
        "iterations": it + 1,
        "converged": converged,
        "objective_trace": objective,
        "ascent_violations": violations,
        "rewhiten_each_iteration": True,
        "init_theta": init.theta_hat.tolist(),
        "init_beta": init.beta_hat.tolist(),
        "weights": weights.tolist(),
    }
    return _penalized_fit(data, beta, theta, variant, taper, pen, "PMLE", cfg, diagnostics, trace)


def _iid_fit(data, beta, selected, method, pen, diagnostics):
    resid = data.y - data.X @ beta
    sigma2 = float(resid @ resid) / data.n
    se_beta = np.full(data.p, np.nan)
    if selected:
        xs = data.X[:, list(selected)]
        se_beta[list(selected)] = np.sqrt(np.diag(np.linalg.inv(xs.T @ xs / sigma2)))
    value = -0.5 * data.n * (LOG_2PI + math.log(sigma2) + 1.0)
    return FitResult(
        beta_hat=beta,
        theta_hat=np.array([np.nan, np.nan, sigma2]),
        selected=selected,
        se_beta=se_beta,
        se_theta=np.array([np.nan, np.nan, sigma2 * math.sqrt(2.0 / data.n)]),
        loglik=value,
        bic=_bic(data.n, sigma2, len(selected)),
        variant=LikelihoodVariant.FULL,
        taper=TaperSpec.none(),
        method=method,
        lam=None if pen is None else pen.lam,
        a=None if pen is None else pen.a,
        names=data.names,
        model="iid",
        diagnostics=diagnostics,
    )


def fit_ols(data: SpatialDataset) -> FitResult:
    """Least squares fit under independent errors (the i.i.d. MLE)."""
    beta, _, rank, _ = np.linalg.lstsq(data.X, data.y, rcond=None)
    if rank < data.p or data.n <= data.p:
        raise RankDeficientDesign(f"design has rank {rank} < {data.p} columns")
    return _iid_fit(data, beta, tuple(range(data.p)), "OLS", None, {})


def fit_baseline_iid(data: SpatialDataset, pen: PenaltySpec | None = None, cfg=None,
                     init: FitResult | None = None) -> FitResult:
    """One-step sparse estimate ignoring spatial dependence (sigma2 * I errors)."""
    cfg = cfg or OptimizerConfig()
    pen = pen or PenaltySpec(0.0)
    if init is None:
        init = fit_ols(data)
    scale = math.sqrt(init.theta_hat[2])
    weights = scad_deriv(np.abs(init.beta_hat), pen)
    beta = weighted_lasso(data.X / scale, data.y / scale, weights, data.n, cfg)
    selected = tuple(int(j) for j in np.flatnonzero(beta))
    return _iid_fit(data, beta, selected, "OSE_iid", pen,
                    {"weights": weights.tolist(), "init_beta": init.beta_hat.tolist(), "init_sigma2": init.theta_hat[2]})


def with_method(fit: FitResult, method: str) -> FitResult:
    return replace(fit, method=method)
