import numpy as np
import pytest

from geoselect.covariance import CovarianceSpec, DenseCholesky, build_covariance, pairwise_distances
from geoselect.exceptions import InvalidParameter
from geoselect.simulation import (
    ScenarioSpec,
    format_summary,
    replicate_rng,
    run_replicate,
    run_scenario,
    sample_covariates,
    sample_gp_response,
    sample_sites,
    simulate_dataset,
    summary_to_csv,
)


def test_site_count_and_bounds():
    sites = sample_sites(5.0, 4.0, replicate_rng(1, 0))
    assert sites.n == 100
    assert np.all((sites.coords >= 0) & (sites.coords <= 5.0))
    assert ScenarioSpec(side=10).n == 400 and ScenarioSpec(side=15).n == 900


def test_sites_deterministic():
    a = sample_sites(5.0, 4.0, replicate_rng(7, 3)).coords
    b = sample_sites(5.0, 4.0, replicate_rng(7, 3)).coords
    c = sample_sites(5.0, 4.0, replicate_rng(7, 4)).coords
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_duplicate_sites_redrawn():
    class Stub:
        def __init__(self):
            self.calls = 0

        def uniform(self, lo, hi, size):
            self.calls += 1
            if self.calls == 1:
                return np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]])
            return np.full(size, 3.0)

    sites = sample_sites(1.0, 3.0, Stub())
    d = pairwise_distances(sites).to_dense()
    assert np.all(d[np.triu_indices(3, 1)] > 0)


def test_covariate_correlation():
    x = sample_covariates(10_000, 7, 0.5, replicate_rng(3, 0))
    corr = np.corrcoef(x, rowvar=False)[np.triu_indices(7, 1)]
    assert np.all(np.abs(corr - 0.5) < 0.03)
    assert np.all(np.abs(x.mean(axis=0)) < 1e-12)
    assert np.allclose(x.std(axis=0), 1.0, atol=1e-12)
    x0 = sample_covariates(2_000, 4, 0.0, replicate_rng(3, 1))
    assert np.all(np.abs(np.corrcoef(x0, rowvar=False)[np.triu_indices(4, 1)]) < 3 / np.sqrt(2_000))


def test_zero_noise_response_is_centered_mean():
    class Zeros:
        def standard_normal(self, n):
            return np.zeros(n)

    rng = np.random.default_rng(0)
    coords = rng.uniform(0, 2, (10, 2))
    X = rng.standard_normal((10, 3))
    beta = np.array([1.0, -2.0, 0.5])
    y = sample_gp_response(coords, X, beta, (1.0, 0.2, 9.0), Zeros())
    mu = X @ beta
    np.testing.assert_allclose(y, mu - mu.mean(), atol=1e-14)


def test_gp_noise_covariance_monte_carlo():
    coords = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 1.2]])
    theta = (1.0, 0.2, 9.0)
    gamma = build_covariance(pairwise_distances(coords), CovarianceSpec(*theta)).to_dense()
    rng = replicate_rng(11, 0)
    draws = np.array([sample_gp_response(coords, np.zeros((3, 1)), [0.0], theta, rng) for _ in range(10_000)])
    # the response is centered, so its covariance is P Gamma P with P the centering projector
    proj = np.eye(3) - 1.0 / 3
    target = proj @ gamma @ proj
    assert np.abs(np.cov(draws, rowvar=False) - target).max() < 0.05 * np.abs(target).max()
    # the factor itself produces Gamma
    z = np.random.default_rng(5).standard_normal((3, 10_000))
    eps = DenseCholesky(gamma).correlate(z)
    assert np.abs(np.cov(eps) - gamma).max() < 0.05 * np.abs(gamma).max()


def test_spec_validation():
    with pytest.raises(InvalidParameter):
        ScenarioSpec(side=0)
    with pytest.raises(InvalidParameter):
        ScenarioSpec(rho=1.0)
    with pytest.raises(InvalidParameter):
        ScenarioSpec(methods=("OSE", "LASSO"))
    with pytest.raises(InvalidParameter):
        ScenarioSpec(reps=0)
    spec = ScenarioSpec(side=10)
    assert spec.taper_omega == 2.5 and spec.p == 7 and spec.support == (0, 1, 2, 3)


SMALL = dict(side=3.0, reps=3, seed=5, grid_size=8)


@pytest.fixture(scope="module")
def small_summary():
    return run_scenario(ScenarioSpec(**SMALL))


def test_replicate_counts(small_summary):
    spec = small_summary.spec
    for rec in small_summary.replicates:
        for name, m in rec["methods"].items():
            assert 0 <= m["C0"] <= 3 and 0 <= m["I0"] <= 4
            zero_truth = [b for b, t in zip(m["beta"], spec.beta_true) if t == 0]
            assert m["C0"] + sum(1 for b in zero_truth if b != 0) == 3
        alt3 = rec["methods"]["OSE_Alt3"]
        assert alt3["C0"] == 3 and alt3["I0"] == 0
    assert small_summary.methods["OSE_Alt3"]["C0"] == 3.0
    for m in small_summary.methods.values():
        for p in m["params"].values():
            assert not (p["SD"] < 0) and not (p["SDm"] < 0)


def test_table_layout(small_summary):
    text = format_summary(small_summary)
    assert text.splitlines()[1].split() == ["Truth", "OSE", "OSE_T", "OSE_Alt1", "OSE_Alt2", "OSE_Alt3"]
    csv_text = summary_to_csv(small_summary)
    stats = [line.split(",")[0] for line in csv_text.splitlines()[1:]]
    assert stats[:2] == ["C0", "I0"] and "SD" in stats and stats[-1] == "dropped"


def test_single_replicate_has_no_sd_rows():
    summary = run_scenario(ScenarioSpec(side=3.0, reps=1, seed=2, grid_size=5, methods=("OSE", "OSE_Alt1")))
    stats = [line.split(",")[0] for line in summary_to_csv(summary).splitlines()[1:]]
    assert "SD" not in stats and "SDm" in stats


def test_determinism_serial_and_parallel(small_summary):
    again = run_scenario(ScenarioSpec(**SMALL))
    parallel = run_scenario(ScenarioSpec(**SMALL), workers=2)
    ref = summary_to_csv(small_summary).encode()
    assert summary_to_csv(again).encode() == ref
    assert summary_to_csv(parallel).encode() == ref


def test_replicate_data_reproducible():
    spec = ScenarioSpec(side=3.0, seed=9)
    a, b = simulate_dataset(spec, 2), simulate_dataset(spec, 2)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.X, b.X) and np.array_equal(a.coords, b.coords)
    assert abs(a.y.mean()) < 1e-12


def test_failures_are_dropped_and_counted(monkeypatch):
    from geoselect import estimators as est
    from geoselect.exceptions import NonConvergence

    spec = ScenarioSpec(side=3.0, reps=2, seed=1, grid_size=5, methods=("OSE", "OSE_Alt3"))
    real = est.fit_mle

    def flaky(data, variant="full", taper=None, cfg=None, active=None):
        if active is None:
            raise NonConvergence("forced")
        return real(data, variant, taper, cfg, active)

    monkeypatch.setattr(est, "fit_mle", flaky)
    summary = run_scenario(spec)
    assert summary.methods["OSE"]["dropped"] == 2 and summary.methods["OSE"]["replicates"] == 0
    assert summary.methods["OSE_Alt3"]["dropped"] == 0
    assert "NonConvergence" in summary.replicates[0]["errors"]["OSE"]
    assert "--" in format_summary(summary)
