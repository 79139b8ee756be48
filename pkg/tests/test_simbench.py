import dataclasses
import math

import numpy as np
import pytest
from scipy.special import ndtri
from scipy.stats import kstest

from bcreg.data import Dataset, standardize, transform_rows
from bcreg.ensemble import EnsembleConfig
from bcreg.errors import DimensionMismatch, InvalidSpec, UnknownScenario
from bcreg.simbench import (
    MetricsReport,
    bootstrap_se,
    coverage_rate,
    gen_design,
    gen_response,
    mspe,
    report_csv_row,
    report_to_dict,
    ridge_fit_predict,
    run_replicates,
    scenario,
    _bcr_predict,
)


def tiny_scenario(n=16, p=6, seed=5):
    rng = np.random.default_rng(seed)
    from bcreg.simbench import Scenario

    return Scenario(
        id="TOY",
        n=n,
        p=p,
        beta0=rng.standard_normal(p),
        sigma2=1.0,
        rho=0.5,
        n_test=n,
    )


# -- scenario table ---------------------------------------------------------


def test_scenario_table_moderate():
    m1 = scenario("M1")
    assert m1.n == 70 and m1.p == 100 and m1.sigma2 == 1.0 and m1.rho == 0.5
    assert np.all(m1.beta0[:5] == 1.2) and np.all(m1.beta0[5:] == 0.0)
    assert scenario("M2").n == 110
    m3 = scenario("M3")
    assert np.all(m3.beta0[:15] == 1.0) and np.all(m3.beta0[15:] == 0.0)
    assert scenario("M4").n == 110
    m5 = scenario("M5")
    assert np.all(m5.beta0 == 0.2) and m5.n == 70 and m5.n_test == 70
    m6 = scenario("M6")
    assert np.all(m6.beta0 == 0.2) and m6.n == 110


def test_scenario_table_high_dimensional():
    hd1 = scenario("HD1")
    assert hd1.n == 110 and hd1.p == 15000 and hd1.n_test == 110
    assert np.all(hd1.beta0[:5] == 1.0) and np.all(hd1.beta0[5:] == 0.0)
    hd2 = scenario("HD2", p=20000)
    assert hd2.p == 20000 and np.all(hd2.beta0 == 0.1)


def test_scenario_unknown():
    with pytest.raises(UnknownScenario):
        scenario("M7")
    with pytest.raises(UnknownScenario):
        scenario("M1", p=50)


# -- generators -------------------------------------------------------------


def test_gen_design_single_column_is_standard_normal():
    x = gen_design(10**5, 1, 0.5, seed=3)[:, 0]
    assert kstest(x, "norm").pvalue > 0.001


def test_gen_design_ar1_correlations():
    n = 10**5
    X = gen_design(n, 4, 0.5, seed=4)
    tol = 3.0 / math.sqrt(n)
    corr = np.corrcoef(X.T)
    for j in range(3):
        assert abs(corr[j, j + 1] - 0.5) < tol
    for j in range(2):
        assert abs(corr[j, j + 2] - 0.25) < tol


def test_gen_design_deterministic():
    a = gen_design(50, 7, 0.5, seed=9)
    b = gen_design(50, 7, 0.5, seed=9)
    assert np.array_equal(a, b)


def test_gen_response_fixed_noise_identity():
    X = gen_design(40, 6, 0.5, seed=1)
    beta = np.arange(6.0)
    z = gen_response(X, np.zeros(6), 1.0, seed=17)
    y = gen_response(X, beta, 4.0, seed=17)
    assert np.abs((y - X @ beta) - 2.0 * z).max() < 1e-12


def test_gen_response_variance():
    X = gen_design(10**5, 3, 0.5, seed=2)
    beta = np.array([1.0, -0.5, 2.0])
    resid = gen_response(X, beta, 2.5, seed=8) - X @ beta
    assert abs(resid.var() - 2.5) < 0.05


def test_gen_response_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        gen_response(np.ones((4, 3)), np.ones(2), 1.0, seed=0)


# -- metrics ----------------------------------------------------------------


def test_mspe_zero_on_perfect_prediction():
    y = np.array([0.5, -1.0, 2.0])
    assert mspe(y, y.copy()) == 0.0


def test_coverage_oracle_intervals_hit_nominal_level():
    # Oracle intervals built from the true generative law must cover at the
    # nominal rate within 3 binomial SEs.
    rng = np.random.default_rng(6)
    R, n_test, q = 40, 50, 0.95
    X = rng.standard_normal((R * n_test, 3))
    beta = np.array([1.0, 0.0, -2.0])
    y = X @ beta + rng.standard_normal(R * n_test)
    half = float(ndtri(0.5 * (1 + q)))
    cover = coverage_rate(y, X @ beta - half, X @ beta + half)
    assert abs(cover - q) < 3 * math.sqrt(q * (1 - q) / (R * n_test))


def test_bootstrap_se_constant_vector():
    assert bootstrap_se(np.full(10, 3.3), seed=1) == 0.0


def test_bootstrap_se_two_values_exhaustive():
    # Resamples of (0, 1) give means {0, .5, .5, 1}; their sd is sqrt(0.125).
    got = bootstrap_se(np.array([0.0, 1.0]), B=20000, seed=2)
    assert got == pytest.approx(math.sqrt(0.125), rel=0.03)


def test_bootstrap_se_matches_clt():
    rng = np.random.default_rng(10)
    values = rng.standard_normal(100)
    got = bootstrap_se(values, B=4000, seed=3)
    assert got == pytest.approx(values.std(ddof=1) / 10.0, rel=0.10)


# -- ridge baseline ---------------------------------------------------------


def test_ridge_lambda_zero_matches_least_squares():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((30, 5))
    y = rng.standard_normal(30)
    Xt = rng.standard_normal((7, 5))
    res = ridge_fit_predict(X, y, Xt, lambda_grid=[0.0])
    beta_ls = np.linalg.lstsq(X, y, rcond=None)[0]
    assert np.abs(res.beta - beta_ls).max() < 1e-8
    assert np.abs(res.mean - Xt @ beta_ls).max() < 1e-8


def test_ridge_infinite_shrinkage_predicts_mean():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((25, 4))
    y = rng.standard_normal(25)
    y -= y.mean()
    Xt = rng.standard_normal((6, 4))
    res = ridge_fit_predict(X, y, Xt, lambda_grid=[1e12])
    # Centered response: the fully shrunk prediction is the train mean, 0.
    assert np.abs(res.mean).max() < 1e-6


def test_ridge_loo_matches_brute_force():
    rng = np.random.default_rng(14)
    X = rng.standard_normal((20, 5))
    y = X @ rng.standard_normal(5) + rng.standard_normal(20)
    grid = [0.01, 0.1, 1.0, 10.0]
    res = ridge_fit_predict(X, y, X[:3], lambda_grid=grid)

    brute = []
    for lam in grid:
        sse = 0.0
        for i in range(20):
            mask = np.arange(20) != i
            Xi, yi = X[mask], y[mask]
            beta = np.linalg.solve(Xi.T @ Xi + lam * np.eye(5), Xi.T @ yi)
            sse += float((y[i] - X[i] @ beta) ** 2)
        brute.append(sse)
    assert np.allclose(res.loo_sse, brute, rtol=1e-8)
    assert res.lam == grid[int(np.argmin(brute))]


def test_ridge_dual_matches_primal():
    # p > n exercises the dual path; compare against the explicit p x p form.
    rng = np.random.default_rng(15)
    X = rng.standard_normal((12, 30))
    y = rng.standard_normal(12)
    Xt = rng.standard_normal((4, 30))
    res = ridge_fit_predict(X, y, Xt, lambda_grid=[0.7])
    beta = np.linalg.solve(X.T @ X + 0.7 * np.eye(30), X.T @ y)
    assert np.abs(res.beta - beta).max() < 1e-8
    assert np.abs(res.mean - Xt @ beta).max() < 1e-8


def test_ridge_interval_width_from_residual_variance():
    rng = np.random.default_rng(16)
    X = rng.standard_normal((40, 3))
    y = X @ np.array([1.0, 2.0, 0.0]) + rng.standard_normal(40)
    res = ridge_fit_predict(X, y, X[:5], lambda_grid=[1.0], level=0.95)
    widths = res.intervals[:, 1] - res.intervals[:, 0]
    assert np.allclose(widths, widths[0])
    assert np.all(res.intervals[:, 0] < res.mean) and np.all(res.mean < res.intervals[:, 1])


# -- replicated runs --------------------------------------------------------


def test_run_replicates_deterministic():
    scen = tiny_scenario()
    cfg = EnsembleConfig(m_min=2, m_max=4, s=3)
    a = run_replicates(scen, "BCR", R=3, cfg=cfg, seed=21)
    b = run_replicates(scen, "BCR", R=3, cfg=cfg, seed=21)
    for field in (
        "mspe_mean",
        "mspe_boot_se",
        "coverage",
        "pi_len_median",
        "pi_len_q025",
        "pi_len_q975",
    ):
        assert getattr(a, field) == getattr(b, field)


def test_run_replicates_schedule_independent():
    scen = tiny_scenario()
    cfg = EnsembleConfig(m_min=2, m_max=4, s=3)
    serial = run_replicates(scen, "BCR", R=4, cfg=cfg, seed=22, n_jobs=1)
    parallel = run_replicates(scen, "BCR", R=4, cfg=cfg, seed=22, n_jobs=2)
    assert serial.mspe_mean == parallel.mspe_mean
    assert serial.coverage == parallel.coverage
    assert serial.pi_len_median == parallel.pi_len_median


def test_run_replicates_ridge_method():
    scen = tiny_scenario()
    rep = run_replicates(scen, "ridge", R=3, seed=23)
    assert rep.n_replicates == 3
    assert rep.mspe_mean > 0
    assert 0.0 <= rep.coverage <= 1.0


def test_run_replicates_validation():
    scen = tiny_scenario()
    with pytest.raises(InvalidSpec):
        run_replicates(scen, "BCR", R=1, seed=0)
    with pytest.raises(InvalidSpec):
        run_replicates(scen, "lasso", R=2, seed=0)


def test_no_leakage_joint_shift_invariance():
    # Shifting train and test predictors (or responses) by the same constant
    # must leave the pipeline's MSPE essentially unchanged, because only
    # train statistics enter the transform.
    rng = np.random.default_rng(30)
    n, p = 20, 5
    X = rng.standard_normal((n, p))
    y = X @ rng.standard_normal(p) + rng.standard_normal(n)
    Xt = rng.standard_normal((n, p))
    yt = Xt @ np.zeros(p) + rng.standard_normal(n)
    cfg = EnsembleConfig(m_min=2, m_max=3, s=2, master_seed=7)

    def pipeline_mspe(Xtr, ytr, Xte, yte):
        std, stats = standardize(Dataset(X=Xtr, y=ytr))
        mean, intervals = _bcr_predict(
            std.X, std.y, transform_rows(stats, Xte), cfg, 0.95
        )
        return mspe(yte, mean + stats.y_mean)

    base = pipeline_mspe(X, y, Xt, yt)
    shift = 13.7
    shifted_x = pipeline_mspe(X + shift, y, Xt + shift, yt)
    assert shifted_x == pytest.approx(base, abs=1e-8)
    shifted_y = pipeline_mspe(X, y + shift, Xt, yt + shift)
    assert shifted_y == pytest.approx(base, abs=1e-8)

    # Shifting only the test predictors must change the predictions.
    changed = pipeline_mspe(X, y, Xt + shift, yt)
    assert abs(changed - base) > 1e-6


def test_report_serialization_round_trip():
    scen = tiny_scenario()
    rep = run_replicates(scen, "ridge", R=2, seed=31)
    payload = report_to_dict(scen, "ridge", 31, rep)
    assert payload["schema_version"] == 1
    assert "wall_time_s" not in str(payload)
    row = report_csv_row(payload)
    assert row.startswith("TOY,ridge,16,6,2,31,")
    assert len(row.split(",")) == 12
