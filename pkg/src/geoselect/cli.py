"""Command-line interface: ``geoselect fit | simulate | report``.

Exit codes: 0 success, 2 data error, 3 nonconvergence, 4 configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import estimators as est
from . import io as gio
from .covariance import TaperSpec
from .exceptions import DataError, GeoSelectError, InvalidParameter, NonConvergence, NotPositiveDefinite, TuningFailed
from .likelihood import check_variant
from .simulation import METHODS, ScenarioSpec, format_summary, run_scenario, simulate_dataset, \
    spec_to_dict, summary_to_csv
from .tuning import LambdaGrid, tune_lambda

EXIT_OK, EXIT_DATA, EXIT_NONCONV, EXIT_CONFIG = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _pair(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError("expected two comma-separated column names")
    return tuple(parts)


def _names(text):
    return [p.strip() for p in text.split(",") if p.strip()]


def _lambda(text):
    if text == "tune":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'tune' or a nonnegative number") from None
    if not math.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError("lambda must be finite and >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geoselect", description="Variable selection for spatial linear models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit a CSV data set")
    fit.add_argument("input", help="CSV file with a header row")
    fit.add_argument("--coords", type=_pair, default=("x", "y"), help="coordinate columns (default x,y)")
    fit.add_argument("--response", default="response")
    fit.add_argument("--covariates", type=_names, default=None,
                     help="comma-separated covariate columns (default: all remaining)")
    fit.add_argument("--taper", choices=("none", "linear"), default="none")
    fit.add_argument("--omega", type=float, default=None, help="taper range")
    fit.add_argument("--variant", choices=("full", "tapered", "tapered-alt"), default=None,
                     help="likelihood (default: full, or tapered with a linear taper)")
    fit.add_argument("--method", choices=("ose", "pmle", "mle", "iid"), default="ose")
    fit.add_argument("--lambda", dest="lam", type=_lambda, default="tune", help="'tune' or a value")
    fit.add_argument("--a", type=float, default=3.7, help="SCAD shape parameter")
    fit.add_argument("--grid-size", type=int, default=30)
    fit.add_argument("--grid-min-ratio", type=float, default=1e-3)
    fit.add_argument("--bic-covariance", choices=("fit", "full"), default="fit")
    fit.add_argument("--bic-theta", choices=("initial", "fitted"), default="initial",
                     help="correlation parameters used to score BIC")
    fit.add_argument("--seed", type=int, default=0, help="recorded only; fitting is deterministic")
    fit.add_argument("--workers", type=int, default=1, help="accepted for symmetry; fitting is serial")
    fit.add_argument("--out", type=Path, default=None, help="directory for fit.json and fit.txt")

    sim = sub.add_parser("simulate", help="run the Monte Carlo comparison")
    sim.add_argument("--l", dest="side", type=float, default=5.0, help="side length of the square")
    sim.add_argument("--density", type=float, default=4.0)
    sim.add_argument("--reps", type=int, default=100)
    sim.add_argument("--seed", type=int, default=1)
    sim.add_argument("--omega", type=float, default=None, help="taper range (default l/4)")
    sim.add_argument("--methods", type=_names, default=list(METHODS))
    sim.add_argument("--grid-size", type=int, default=30)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--out", type=Path, default=None, help="directory for summary.csv, replicates.json, table.txt")
    sim.add_argument("--save-data", action="store_true", help="also write each replicate's data as CSV")

    rep = sub.add_parser("report", help="merge result JSON files into one table")
    rep.add_argument("inputs", nargs="*", type=Path)
    rep.add_argument("--out", type=Path, default=None, help="write the table here as well")
    return parser


def _taper(args) -> TaperSpec:
    if args.taper == "none":
        if args.omega is not None:
            raise InvalidParameter("--omega requires --taper linear")
        return TaperSpec.none()
    if args.omega is None:
        raise InvalidParameter("--taper linear requires --omega")
    return TaperSpec.linear(args.omega)


def cmd_fit(args) -> int:
    taper = _taper(args)
    variant = args.variant or ("full" if taper.is_none else "tapered")
    variant = check_variant(variant, taper)
    if args.grid_size < 1:
        raise InvalidParameter("--grid-size must be positive")
    raw = gio.read_dataset_csv(args.input, args.coords, args.response, args.covariates)
    data, prep = gio.standardize(raw)
    cfg = est.OptimizerConfig()
    extra = {}
    if args.method == "mle":
        fit = est.fit_mle(data, variant, taper, cfg)
    elif args.method == "pmle":
        init = est.fit_mle(data, variant, taper, cfg)
        lam = args.lam
        if lam == "tune":
            tuned = tune_lambda(data, variant, taper, cfg=cfg, a=args.a, init=init,
                                bic_covariance=args.bic_covariance, bic_theta=args.bic_theta, grid_size=args.grid_size,
                                min_ratio=args.grid_min_ratio)
            lam = tuned.chosen_lam
        fit = est.fit_pmle(data, variant, taper, est.PenaltySpec(lam, args.a), cfg, init=init)
    else:
        model = "iid" if args.method == "iid" else "spatial"
        grid = None if args.lam == "tune" else LambdaGrid((args.lam,))
        tuned = tune_lambda(data, variant, taper, grid=grid, cfg=cfg, a=args.a, model=model,
                            bic_covariance=args.bic_covariance, bic_theta=args.bic_theta, grid_size=args.grid_size,
                            min_ratio=args.grid_min_ratio)
        fit = tuned.best
        extra["lambda_path"] = [{"lambda": r.lam, "k": r.k, "bic": r.bic} for r in tuned.records]
    config = {
        "input": str(args.input),
        "coords": list(args.coords),
        "response": args.response,
        "covariates": list(raw.names),
        "taper": {"family": taper.family, "omega": taper.omega},
        "variant": variant.value,
        "method": args.method,
        "lambda": args.lam,
        "a": args.a,
        "grid_size": args.grid_size,
        "grid_min_ratio": args.grid_min_ratio,
        "bic_covariance": args.bic_covariance,
        "bic_theta": args.bic_theta,
        "seed": args.seed,
    }
    doc = gio.fit_to_dict(fit, config, prep)
    doc["diagnostics"].update(gio._jsonable(extra))
    table = gio.format_fit(doc)
    print(table)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        gio.dump_json(doc, args.out / "fit.json")
        (args.out / "fit.txt").write_text(table + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = ScenarioSpec(side=args.side, density=args.density, reps=args.reps, seed=args.seed,
                        omega=args.omega, methods=tuple(args.methods), grid_size=args.grid_size)
    if args.workers < 1:
        raise InvalidParameter("--workers must be positive")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        if args.save_data:
            (args.out / "data").mkdir(exist_ok=True)

    def progress(rec):
        print(f"replicate {rec['rep']}: {rec['seconds']:.2f} s", file=sys.stderr, flush=True)
        if args.out is not None and args.save_data:
            gio.write_dataset_csv(args.out / "data" / f"rep_{rec['rep']:04d}.csv", simulate_dataset(spec, rec["rep"]))

    summary = run_scenario(spec, workers=args.workers, progress=progress)
    table = format_summary(summary)
    print(table)
    if args.out is not None:
        (args.out / "summary.csv").write_text(summary_to_csv(summary))
        (args.out / "table.txt").write_text(table + "\n")
        doc = {
            "schema_version": gio.SCHEMA_VERSION,
            "kind": "scenario",
            "config": spec_to_dict(spec),
            "summary": summary.methods,
            "replicates": summary.replicates,
        }
        gio.dump_json(doc, args.out / "replicates.json")
    return EXIT_OK


def _fit_section(docs):
    labels = [f"[{i + 1}] {d['method']}/{d['variant']}" for i, d in enumerate(docs)]
    names = []
    for d in docs:
        names += [b["name"] for b in d["beta"] if b["name"] not in names]
    rows = []
    for name in names:
        cells = []
        for d in docs:
            b = next((b for b in d["beta"] if b["name"] == name), None)
            if b is None:
                cells.append("")
            elif b["se"] is None and b["estimate"] == 0.0:
                cells.append("--")
            else:
                cells.append(f"{b['estimate']:.3f} ({gio._fmt(b['se'])})")
        rows.append([name, *cells])
    for key, label in (("r", "Range"), ("c", "Nugget"), ("sigma2", "sigma2")):
        rows.append([label, *(f"{gio._fmt(d['theta'][key])} ({gio._fmt(d['theta']['se'][key])})" for d in docs)])
    rows.append(["lambda", *(gio._fmt(d["lambda"], 4) for d in docs)])
    rows.append(["loglik", *(f"{d['loglik']:.3f}" for d in docs)])
    rows.append(["BIC", *(f"{d['bic']:.3f}" for d in docs)])
    return _grid(["Terms", *labels], rows)


def _grid(header, rows):
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(header), *(fmt(r) for r in rows)])


def _scenario_section(doc):
    cfg = doc["config"]
    methods = list(doc["summary"])
    rows = []
    for stat in ("C0", "I0"):
        rows.append([stat, *(gio._fmt(doc["summary"][m].get(stat), 2) for m in methods)])
    params = next((s["params"] for s in doc["summary"].values() if "params" in s), {})
    for name in params:
        for stat in ("mean", "SD", "SDm"):
            vals = []
            for m in methods:
                p = doc["summary"][m].get("params", {}).get(name)
                v = p.get(stat) if p else None
                vals.append(gio._fmt(v, 2))
            rows.append([f"{name} {stat}", *vals])
    title = f"N = {cfg['n']}, omega = {cfg['taper_omega']:g}, replicates = {cfg['reps']}, seed = {cfg['seed']}"
    return title + "\n" + _grid(["", *methods], rows)


def cmd_report(args) -> int:
    if not args.inputs:
        raise UsageError("report needs at least one result file")
    docs = [gio.load_result(p) for p in args.inputs]
    fits = [d for d in docs if d.get("kind") == "fit"]
    scenarios = [d for d in docs if d.get("kind") == "scenario"]
    if len(fits) + len(scenarios) != len(docs):
        raise DataError("result files must have kind 'fit' or 'scenario'")
    sections = []
    if fits:
        sections.append("== Fits ==\n" + _fit_section(fits))
    for i, d in enumerate(scenarios):
        sections.append(f"== Scenario {i + 1} ==\n" + _scenario_section(d))
    text = "\n\n".join(sections)
    print(text)
    if args.out is not None:
        args.out.write_text(text + "\n")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"geoselect: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParameter as exc:
        print(f"geoselect: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, TuningFailed) as exc:
        print(f"geoselect: did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (DataError, NotPositiveDefinite, GeoSelectError) as exc:
        print(f"geoselect: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
