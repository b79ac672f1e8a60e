"""Gaussian-process data generation and the Monte Carlo comparison harness.

Every replicate draws from its own Philox stream keyed by ``(seed, rep)``,
so replicates can run in any order or in parallel with identical results.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from . import estimators as est
from .covariance import DUPLICATE_TOL, CovarianceSpec, DenseCholesky, SiteSet, TaperSpec, build_covariance, pairwise_distances
from .data import SpatialDataset
from .exceptions import GeoSelectError, InvalidParameter
from .tuning import tune_lambda

__all__ = [
    "METHODS",
    "ScenarioSpec",
    "ScenarioSummary",
    "replicate_rng",
    "sample_sites",
    "sample_covariates",
    "sample_gp_response",
    "simulate_dataset",
    "run_replicate",
    "run_scenario",
    "summarize",
    "summary_to_csv",
    "format_summary",
]

METHODS = ("OSE", "OSE_T", "OSE_Alt1", "OSE_Alt2", "OSE_Alt3")
EXTRA_METHODS = ("MLE", "MLE_T")
THETA_NAMES = ("r", "c", "sigma2")


@dataclass(frozen=True)
class ScenarioSpec:
    """Simulation design; ``omega`` defaults to a quarter of the side length."""

    side: float = 5.0
    density: float = 4.0
    beta_true: tuple = (4.0, 3.0, 2.0, 1.0, 0.0, 0.0, 0.0)
    rho: float = 0.5
    theta_true: tuple = (1.0, 0.2, 9.0)
    omega: float | None = None
    reps: int = 100
    seed: int = 1
    methods: tuple = METHODS
    a: float = 3.7
    grid_size: int = 30

    def __post_init__(self):
        if self.side <= 0 or self.density <= 0:
            raise InvalidParameter("side length and density must be positive")
        if self.reps < 1:
            raise InvalidParameter("need at least one replicate")
        if not 0 <= self.rho < 1:
            raise InvalidParameter("rho must lie in [0, 1)")
        unknown = set(self.methods) - set(METHODS) - set(EXTRA_METHODS)
        if unknown:
            raise InvalidParameter(f"unknown methods {sorted(unknown)}")
        CovarianceSpec(*self.theta_true)
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        object.__setattr__(self, "theta_true", tuple(float(t) for t in self.theta_true))
        object.__setattr__(self, "methods", tuple(self.methods))

    @property
    def n(self) -> int:
        return int(round(self.density * self.side**2))

    @property
    def p(self) -> int:
        return len(self.beta_true)

    @property
    def taper_omega(self) -> float:
        return self.side / 4.0 if self.omega is None else float(self.omega)

    @property
    def support(self) -> tuple:
        return tuple(j for j, b in enumerate(self.beta_true) if b != 0)


@dataclass
class ScenarioSummary:
    spec: ScenarioSpec
    methods: dict
    replicates: list = field(default_factory=list)


def replicate_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(rep),))))


def sample_sites(side: float, density: float, rng: np.random.Generator) -> SiteSet:
    """``density * side**2`` uniform sites on the square, duplicates redrawn."""
    if side <= 0:
        raise InvalidParameter("side length must be positive")
    n = int(round(density * side**2))
    coords = rng.uniform(0.0, side, size=(n, 2))
    while n > 1:
        close = np.tril(squareform(pdist(coords)) < DUPLICATE_TOL, -1)
        dup = np.unique(np.nonzero(close)[0])
        if dup.size == 0:
            break
        coords[dup] = rng.uniform(0.0, side, size=(dup.size, 2))
    return SiteSet(coords)


def sample_covariates(n: int, p: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Equicorrelated normal covariates, then centered and scaled to unit variance."""
    corr = np.full((p, p), rho) + (1.0 - rho) * np.eye(p)
    z = rng.standard_normal((n, p))
    x = z @ np.linalg.cholesky(corr).T
    x = x - x.mean(axis=0)
    return x / x.std(axis=0)


def sample_gp_response(sites, X, beta_true, theta_true, rng) -> np.ndarray:
    """``X beta + L z`` with ``L L^T`` the covariance matrix, then centered."""
    if not isinstance(sites, SiteSet):
        sites = SiteSet(sites)
    spec = theta_true if isinstance(theta_true, CovarianceSpec) else CovarianceSpec(*theta_true)
    gamma = build_covariance(pairwise_distances(sites), spec)
    factor = DenseCholesky(gamma.data)
    y = X @ np.asarray(beta_true, dtype=float) + factor.correlate(rng.standard_normal(sites.n))
    return y - y.mean()


def simulate_dataset(spec: ScenarioSpec, rep: int) -> SpatialDataset:
    rng = replicate_rng(spec.seed, rep)
    sites = sample_sites(spec.side, spec.density, rng)
    X = sample_covariates(sites.n, spec.p, spec.rho, rng)
    y = sample_gp_response(sites, X, spec.beta_true, spec.theta_true, rng)
    return SpatialDataset(sites.coords, X, y)


def _record(fit: est.FitResult, spec: ScenarioSpec, seconds: float) -> dict:
    zero = fit.beta_hat == 0
    truth_zero = np.array(spec.beta_true) == 0
    return {
        "beta": fit.beta_hat.tolist(),
        "se_beta": fit.se_beta.tolist(),
        "theta": fit.theta_hat.tolist(),
        "se_theta": fit.se_theta.tolist(),
        "C0": int(np.sum(zero & truth_zero)),
        "I0": int(np.sum(zero & ~truth_zero)),
        "lam": fit.lam,
        "seconds": seconds,
    }


def run_replicate(spec: ScenarioSpec, rep: int, cfg: est.OptimizerConfig | None = None) -> dict:
    """Simulate one data set and fit every requested method on it."""
    cfg = cfg or est.OptimizerConfig()
    t0 = time.perf_counter()
    data = simulate_dataset(spec, rep)
    taper = TaperSpec.linear(spec.taper_omega)
    wanted = set(spec.methods)
    out, errors = {}, {}
    cache = {}

    def timed(name, fn):
        t = time.perf_counter()
        try:
            fit = fn()
        except GeoSelectError as exc:
            errors[name] = f"{type(exc).__name__}: {exc}"
            return None
        if name in wanted:
            out[name] = _record(fit, spec, time.perf_counter() - t)
        return fit

    def mle():
        if "mle" not in cache:
            cache["mle"] = est.fit_mle(data, "full", TaperSpec.none(), cfg)
        return cache["mle"]

    def mle_t():
        if "mle_t" not in cache:
            cache["mle_t"] = est.fit_mle(data, "tapered", taper, cfg)
        return cache["mle_t"]

    def oracle():
        if "oracle" not in cache:
            cache["oracle"] = est.fit_mle(data, "full", TaperSpec.none(), cfg, active=spec.support)
        return cache["oracle"]

    def tuned(**kw):
        return tune_lambda(data, cfg=cfg, a=spec.a, grid_size=spec.grid_size, **kw).best

    if "MLE" in wanted or "OSE" in wanted:
        timed("MLE", mle)
    if "MLE_T" in wanted or "OSE_T" in wanted:
        timed("MLE_T", mle_t)
    if "OSE" in wanted and "mle" in cache:
        timed("OSE", lambda: tuned(variant="full", init=mle()))
    if "OSE_T" in wanted and "mle_t" in cache:
        timed("OSE_T", lambda: tuned(variant="tapered", taper=taper, init=mle_t()))
    if "OSE_Alt1" in wanted:
        timed("OSE_Alt1", lambda: tuned(model="iid"))
    if "OSE_Alt3" in wanted or "OSE_Alt2" in wanted:
        timed("OSE_Alt3", oracle)
    if "OSE_Alt2" in wanted and "oracle" in cache:
        timed("OSE_Alt2", lambda: tuned(variant="full", init=oracle()))
    for name in ("OSE", "OSE_T"):
        base = "MLE" if name == "OSE" else "MLE_T"
        if name in wanted and base in errors:
            errors[name] = errors[base]
    if "OSE_Alt2" in wanted and "OSE_Alt3" in errors:
        errors["OSE_Alt2"] = errors["OSE_Alt3"]
    return {
        "rep": rep,
        "n": data.n,
        "methods": {m: out[m] for m in spec.methods if m in out},
        "errors": {m: errors[m] for m in spec.methods if m in errors},
        "seconds": time.perf_counter() - t0,
    }


def _sd(values):
    return float(np.std(values, ddof=1)) if len(values) > 1 else math.nan


def _median(values):
    values = [v for v in values if np.isfinite(v)]
    return float(np.median(values)) if values else math.nan


def summarize(spec: ScenarioSpec, replicates: list) -> ScenarioSummary:
    """Per-method C0/I0 averages and mean/SD/SDm of every parameter."""
    replicates = sorted(replicates, key=lambda r: r["rep"])
    methods = {}
    for m in spec.methods:
        recs = [r["methods"][m] for r in replicates if m in r["methods"]]
        entry = {"replicates": len(recs), "dropped": len(replicates) - len(recs)}
        if recs:
            entry["C0"] = float(np.mean([r["C0"] for r in recs]))
            entry["I0"] = float(np.mean([r["I0"] for r in recs]))
            params = {}
            for j in range(spec.p):
                est_j = [r["beta"][j] for r in recs]
                params[f"beta{j + 1}"] = {
                    "truth": spec.beta_true[j],
                    "mean": float(np.mean(est_j)),
                    "SD": _sd(est_j),
                    "SDm": _median([r["se_beta"][j] for r in recs]),
                }
            for k, name in enumerate(THETA_NAMES):
                est_k = [r["theta"][k] for r in recs]
                finite = [v for v in est_k if np.isfinite(v)]
                params[name] = {
                    "truth": spec.theta_true[k],
                    "mean": float(np.mean(finite)) if finite else math.nan,
                    "SD": _sd(finite) if finite else math.nan,
                    "SDm": _median([r["se_theta"][k] for r in recs]),
                }
            entry["params"] = params
        methods[m] = entry
    return ScenarioSummary(spec, methods, replicates)


def _run_one(args):
    spec, rep, cfg = args
    return run_replicate(spec, rep, cfg)


def run_scenario(spec: ScenarioSpec, workers: int = 1, cfg: est.OptimizerConfig | None = None,
                 progress=None) -> ScenarioSummary:
    """Run all replicates (optionally in worker processes) and summarize.

    ``progress`` is called with each finished replicate record.
    """
    jobs = [(spec, rep, cfg) for rep in range(spec.reps)]
    records = []
    if workers <= 1:
        for job in jobs:
            rec = _run_one(job)
            records.append(rec)
            if progress:
                progress(rec)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_run_one, jobs):
                records.append(rec)
                if progress:
                    progress(rec)
    return summarize(spec, records)


def _table_rows(summary: ScenarioSummary):
    """Rows ``(statistic, parameter, truth, values...)`` in table layout."""
    spec = summary.spec
    ms = [summary.methods[m] for m in spec.methods]
    single = spec.reps == 1
    n_zero = sum(1 for b in spec.beta_true if b == 0)
    rows = [
        ("C0", "", float(n_zero), [m.get("C0", math.nan) for m in ms]),
        ("I0", "", math.nan, [m.get("I0", math.nan) for m in ms]),
    ]
    names = [f"beta{j + 1}" for j, b in enumerate(spec.beta_true) if b != 0] + list(THETA_NAMES)
    for name in names:
        truth = None
        for stat in ("mean", "SD", "SDm"):
            if stat == "SD" and single:
                continue
            vals = []
            for m in ms:
                p = m.get("params", {}).get(name)
                vals.append(p[stat] if p else math.nan)
                truth = p["truth"] if p else truth
            rows.append((stat, name, truth if stat == "mean" else math.nan, vals))
    rows.append(("dropped", "", math.nan, [float(m["dropped"]) for m in ms]))
    return rows


def _csv_num(v):
    return "" if v is None or not np.isfinite(v) else repr(float(v))


def summary_to_csv(summary: ScenarioSummary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["statistic", "parameter", "truth", *summary.spec.methods])
    for stat, name, truth, vals in _table_rows(summary):
        writer.writerow([stat, name, _csv_num(truth), *(_csv_num(v) for v in vals)])
    return buf.getvalue()


def format_summary(summary: ScenarioSummary) -> str:
    """Human-readable table with two decimals; ``--`` for missing entries."""
    spec = summary.spec
    header = ["", "Truth", *spec.methods]
    lines = []
    for stat, name, truth, vals in _table_rows(summary):
        label = name if stat == "mean" else stat
        fmt = (lambda v: "--" if not np.isfinite(v) else f"{v:.2f}")
        cells = [label, "" if not np.isfinite(truth) else f"{truth:.2f}", *(fmt(v) for v in vals)]
        if stat == "dropped":
            cells = [stat, "", *("--" if not np.isfinite(v) else str(int(v)) for v in vals)]
        lines.append(cells)
    widths = [max(len(r[i]) for r in [header, *lines]) for i in range(len(header))]
    out = [f"N = {spec.n}, omega = {spec.taper_omega:g}, replicates = {spec.reps}"]
    out.append("  ".join(h.rjust(w) if i else h.ljust(w) for i, (h, w) in enumerate(zip(header, widths))))
    for cells in lines:
        out.append("  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths))))
    return "\n".join(out)


def spec_to_dict(spec: ScenarioSpec) -> dict:
    d = asdict(spec)
    d["n"] = spec.n
    d["taper_omega"] = spec.taper_omega
    return d
