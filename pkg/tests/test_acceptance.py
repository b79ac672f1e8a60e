"""Acceptance criteria, each run at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary.  The N = 400 and N = 100 scenario runs are shared session
fixtures (see ``conftest.py``).  Set ``GEOSELECT_ACCEPT_N900=1`` (or run on a
machine with at least 8 cores) to evaluate the oracle-efficiency criterion at
N = 900 instead of its N = 400 fallback.
"""

import os
import time

import numpy as np
import pytest

from geoselect import TaperSpec
from geoselect.data import Geometry
from geoselect.estimators import weighted_lasso
from geoselect.likelihood import Evaluation, LikelihoodVariant, ModelState, loglik, score_theta
from geoselect.simulation import ScenarioSpec, run_scenario, simulate_dataset, summary_to_csv

from conftest import record_criterion, worker_count
from helpers import random_dataset
from oracles import lasso_grid_search

VARIANTS = (("full", None), ("tapered", "linear"), ("tapered_alt", "linear"))


def test_criterion_1_gradient_fidelity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for variant, family in VARIANTS:
        for i in range(20):
            n = int(rng.integers(5, 51))
            data = random_dataset(int(rng.integers(2**31)), n=n, p=2, side=4.0)
            theta = [rng.uniform(0.3, 2.0), rng.uniform(0.05, 0.8), rng.uniform(0.5, 4.0)]
            taper = TaperSpec.none() if family is None else TaperSpec.linear(rng.uniform(1.0, 3.0))
            beta = rng.standard_normal(2)
            s = score_theta(data, ModelState(beta, theta), variant, taper)
            h = 1e-5
            for k in range(3):
                up, dn = list(theta), list(theta)
                up[k] += h
                dn[k] -= h
                fd = (loglik(data, ModelState(beta, up), variant, taper)
                      - loglik(data, ModelState(beta, dn), variant, taper)) / (2 * h)
                worst = max(worst, abs(fd - s[k]) / abs(s[k]))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 60
    record_criterion("1 gradient fidelity", ok, f"max relative error {worst:.2e} over 60 instances, {elapsed:.1f} s")
    assert ok


def test_criterion_2_weighted_lasso_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(50):
        p = int(rng.integers(1, 4))
        n = int(rng.integers(p + 2, 21))
        X = rng.standard_normal((n, p))
        y = X @ rng.normal(0, 1.5, p) + rng.standard_normal(n)
        top = np.abs(X.T @ y).max() / n
        w = rng.uniform(0, 1.2 * top, p) * (rng.random(p) > 0.2)
        worst = max(worst, np.abs(weighted_lasso(X, y, w, n) - lasso_grid_search(X, y, w, n)).max())
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 120
    record_criterion("2 weighted-lasso oracle", ok, f"max coordinate gap {worst:.2e} over 50 instances, {elapsed:.1f} s")
    assert ok


def test_criterion_3_taper_none_equivalence():
    rng = np.random.default_rng(303)
    worst = 0.0
    none = TaperSpec.none()
    for i in range(20):
        data = random_dataset(int(rng.integers(2**31)), n=int(rng.integers(2, 60)), p=2)
        state = ModelState(rng.standard_normal(2), (rng.uniform(0.2, 3), rng.uniform(0, 0.9), rng.uniform(0.1, 10)))
        full = loglik(data, state, "full", none)
        for v in ("tapered", "tapered_alt"):
            worst = max(worst, abs(loglik(data, state, v, none) - full))
    ok = worst <= 1e-12
    record_criterion("3 taper-none equivalence", ok, f"max |difference| {worst:.1e} over 20 instances")
    assert ok


def test_criterion_4_n400_selection(scenario_400):
    ose = scenario_400.methods["OSE"]
    b1 = ose["params"]["beta1"]
    checks = {
        "C0 in [2.85, 3.00]": 2.85 <= ose["C0"] <= 3.00,
        "I0 <= 0.05": ose["I0"] <= 0.05,
        "mean beta1 in [3.90, 4.10]": 3.90 <= b1["mean"] <= 4.10,
        "SD beta1 in [0.10, 0.18]": 0.10 <= b1["SD"] <= 0.18,
    }
    ok = all(checks.values())
    detail = (f"C0 {ose['C0']:.2f}, I0 {ose['I0']:.2f}, mean beta1 {b1['mean']:.3f}, SD {b1['SD']:.3f} "
              f"({ose['replicates']} replicates, {ose['dropped']} dropped)")
    record_criterion("4 N=400 OSE selection", ok, detail)
    assert ok, {k: v for k, v in checks.items() if not v}


def test_criterion_5_iid_baseline_overshrinks(scenario_100):
    ose, alt1 = scenario_100.methods["OSE"], scenario_100.methods["OSE_Alt1"]
    gap = alt1["I0"] - ose["I0"]
    ok = gap >= 0.10
    record_criterion("5 N=100 baseline contrast", ok,
                     f"I0 OSE_Alt1 {alt1['I0']:.2f} vs OSE {ose['I0']:.2f} (margin {gap:.2f})")
    assert ok


def _n900_requested():
    return os.environ.get("GEOSELECT_ACCEPT_N900") == "1" or (os.cpu_count() or 1) >= 8


def test_criterion_6_oracle_efficiency(scenario_400):
    if _n900_requested():
        spec = ScenarioSpec(side=15, reps=50, seed=1, methods=("OSE", "OSE_Alt3"))
        summary = run_scenario(spec, workers=worker_count())
        where = "N=900, 50 replicates"
    else:
        summary = scenario_400
        where = "N=400 fallback, 100 replicates"
    ose, alt3 = summary.methods["OSE"]["params"], summary.methods["OSE_Alt3"]["params"]
    ratios = [ose[f"beta{j}"]["SD"] / alt3[f"beta{j}"]["SD"] for j in range(1, 5)]
    ok = all(abs(r - 1) <= 0.25 for r in ratios)
    record_criterion("6 oracle efficiency", ok, f"{where}; SD ratios OSE/Alt3 " + ", ".join(f"{r:.3f}" for r in ratios))
    assert ok


def test_criterion_7_tapered_mle_efficiency(scenario_400):
    sd_full = scenario_400.methods["MLE"]["params"]["beta1"]["SD"]
    sd_tap = scenario_400.methods["MLE_T"]["params"]["beta1"]["SD"]
    ratio = sd_tap / sd_full
    ok = abs(ratio - 1) <= 0.15 and scenario_400.methods["MLE_T"]["replicates"] >= 100
    record_criterion("7 MLE_T efficiency", ok, f"SD beta1 MLE_T {sd_tap:.3f} vs MLE {sd_full:.3f} (ratio {ratio:.3f})")
    assert ok


def _best_time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def test_criterion_8_tapered_evaluation_faster():
    spec = ScenarioSpec(side=15, seed=1)
    data = simulate_dataset(spec, 0)
    resid = data.y - data.X @ np.array(spec.beta_true)
    r, c, s2 = spec.theta_true
    dense_geom = Geometry(data.distances, TaperSpec.none())
    sparse_geom = Geometry(data.distances, TaperSpec.linear(spec.taper_omega))
    dense = lambda: Evaluation(dense_geom, r, c, s2, LikelihoodVariant.FULL).loglik(resid)
    sparse = lambda: Evaluation(sparse_geom, r, c, s2, LikelihoodVariant.TAPERED).loglik(resid)
    dense(), sparse()
    t_dense, t_sparse = _best_time(dense, 15), _best_time(sparse, 15)
    ratio = t_dense / t_sparse
    ok = t_sparse < t_dense
    record_criterion("8 tapered evaluation speed", ok,
                     f"N=900: dense {1e3 * t_dense:.1f} ms, tapered {1e3 * t_sparse:.1f} ms (speed-up {ratio:.1f}x)")
    assert ok


def test_criterion_9_serial_parallel_determinism():
    spec = ScenarioSpec(side=4, reps=4, seed=9, grid_size=10)
    serial = summary_to_csv(run_scenario(spec, workers=1)).encode()
    parallel = summary_to_csv(run_scenario(spec, workers=3)).encode()
    ok = serial == parallel
    record_criterion("9 determinism", ok, f"serial and 3-worker CSV {'identical' if ok else 'differ'} ({len(serial)} bytes)")
    assert ok


def test_invariant_selection_improves_with_n(scenario_100, scenario_400):
    small, large = scenario_100.methods["OSE"], scenario_400.methods["OSE"]
    ok = large["C0"] >= small["C0"] - 0.05 and large["I0"] <= small["I0"] + 0.05
    record_criterion("invariant C0/I0 trend N=100 -> 400", ok,
                     f"C0 {small['C0']:.2f} -> {large['C0']:.2f}, I0 {small['I0']:.2f} -> {large['I0']:.2f}")
    assert ok
