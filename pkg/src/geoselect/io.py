"""CSV input, preprocessing, and the versioned JSON result format."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import SpatialDataset
from .estimators import FitResult
from .exceptions import DataError

SCHEMA_VERSION = 1

# Columns already within this distance of mean 0 / variance 1 are used as-is,
# which keeps refits of exported (already standardized) data bit-stable.
STANDARDIZED_TOL = 1e-10


@dataclass
class Preprocessing:
    y_mean: float
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_centered: bool
    x_standardized: list

    def to_dict(self) -> dict:
        return {
            "y_mean": self.y_mean,
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_centered": self.y_centered,
            "x_standardized": self.x_standardized,
        }


def read_dataset_csv(path, coords=("x", "y"), response="response", covariates=None) -> SpatialDataset:
    """Parse a header CSV into a dataset (no preprocessing).

    Covariates default to every column that is neither a coordinate nor the
    response.  Errors name the offending data row (1-based, header excluded).
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if len(set(header)) != len(header):
            raise DataError("duplicate column names in header")
        missing = [c for c in (*coords, response) if c not in header]
        if missing:
            raise DataError(f"columns not found in header: {', '.join(missing)}")
        if covariates is None:
            covariates = [h for h in header if h not in (*coords, response)]
        else:
            bad = [c for c in covariates if c not in header]
            if bad:
                raise DataError(f"covariate columns not found: {', '.join(bad)}")
        if not covariates:
            raise DataError("no covariate columns")
        index = {h: i for i, h in enumerate(header)}
        rows = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"row {row_no}: expected {len(header)} fields, got {len(row)}")
            values = []
            for name in (*coords, response, *covariates):
                cell = row[index[name]].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"row {row_no}: column {name!r} has non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"row {row_no}: column {name!r} is missing or not finite")
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataError(f"{path} has no data rows")
    arr = np.array(rows)
    nc = len(coords)
    return SpatialDataset(arr[:, :nc], arr[:, nc + 1:], arr[:, nc], tuple(covariates))


def write_dataset_csv(path, data: SpatialDataset, coords=("x", "y"), response="response"):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*coords, response, *data.names])
        for i in range(data.n):
            w.writerow([repr(float(v)) for v in (*data.coords[i], data.y[i], *data.X[i])])


def standardize(data: SpatialDataset):
    """Center the response and scale covariates to mean 0, variance 1."""
    X = data.X.copy()
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    if np.any(scale == 0):
        bad = [data.names[j] for j in np.flatnonzero(scale == 0)]
        raise DataError(f"constant covariate columns: {', '.join(bad)}")
    done = (np.abs(mean) < STANDARDIZED_TOL) & (np.abs(scale - 1.0) < STANDARDIZED_TOL)
    todo = ~done
    X[:, todo] = (X[:, todo] - mean[todo]) / scale[todo]
    y_mean = float(data.y.mean())
    y_done = abs(y_mean) < STANDARDIZED_TOL
    y = data.y if y_done else data.y - y_mean
    out = SpatialDataset(data.coords, X, y, data.names)
    out.__dict__["distances"] = data.distances
    mean = np.where(done, 0.0, mean)
    scale = np.where(done, 1.0, scale)
    prep = Preprocessing(0.0 if y_done else y_mean, mean, scale, True, [bool(t) for t in todo])
    return out, prep


def _num(v):
    return None if v is None or not math.isfinite(v) else float(v)


def fit_to_dict(fit: FitResult, config: dict | None = None, prep: Preprocessing | None = None) -> dict:
    beta = [
        {"name": name, "estimate": float(b), "se": _num(se)}
        for name, b, se in zip(fit.names, fit.beta_hat, fit.se_beta)
    ]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "fit",
        "method": fit.method,
        "model": fit.model,
        "variant": fit.variant.value,
        "taper": {"family": fit.taper.family, "omega": fit.taper.omega},
        "lambda": fit.lam,
        "a": fit.a,
        "config": config or {},
        "beta": beta,
        "theta": {
            "r": _num(fit.theta_hat[0]),
            "c": _num(fit.theta_hat[1]),
            "sigma2": _num(fit.theta_hat[2]),
            "se": {k: _num(v) for k, v in zip(("r", "c", "sigma2"), fit.se_theta)},
        },
        "selected": [fit.names[j] for j in fit.selected],
        "loglik": float(fit.loglik),
        "bic": float(fit.bic),
        "diagnostics": _jsonable(fit.diagnostics),
    }
    if prep is not None:
        doc["preprocessing"] = prep.to_dict()
        doc["beta_original_scale"] = [
            {"name": n, "estimate": float(b / s)} for n, b, s in zip(fit.names, fit.beta_hat, prep.x_scale)
        ]
    return doc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return _num(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def dump_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(doc), indent=2, allow_nan=False) + "\n")


def load_result(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read result file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        found = doc.get("schema_version") if isinstance(doc, dict) else None
        raise DataError(f"{path}: schema_version {found!r} does not match {SCHEMA_VERSION}")
    return doc


def _fmt(v, digits=3):
    return "--" if v is None or not math.isfinite(v) else f"{v:.{digits}f}"


def format_fit(doc: dict) -> str:
    """Estimate/SD table; ``--`` marks shrunk terms and absent parameters."""
    rows = [("Regression coefficients", None, None)]
    for b in doc["beta"]:
        shrunk = b["se"] is None and b["estimate"] == 0.0
        rows.append((b["name"], None if shrunk else b["estimate"], b["se"]))
    rows.append(("Covariance parameters", None, None))
    th = doc["theta"]
    for key, label in (("r", "Range"), ("c", "Nugget"), ("sigma2", "sigma2")):
        rows.append((label, th[key], th["se"][key]))
    width = max(len(r[0]) for r in rows)
    lines = [f"{doc['method']} ({doc['model']}, {doc['variant']}, lambda={_fmt(doc['lambda'], 4)})"]
    lines.append(f"{'Terms'.ljust(width)}  {'Estimate':>9}  {'SD':>7}")
    for name, est, se in rows:
        if name.endswith("coefficients") or name.endswith("parameters"):
            lines.append(name)
            continue
        lines.append(f"{name.ljust(width)}  {_fmt(est):>9}  {_fmt(se):>7}")
    lines.append(f"loglik = {doc['loglik']:.3f}, BIC = {doc['bic']:.3f}")
    return "\n".join(lines)
