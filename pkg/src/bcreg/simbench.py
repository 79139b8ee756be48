"""Simulation study: scenario generators, metrics, and the ridge baseline.

Designs are rows of a zero-mean Gaussian with AR(1) correlation
cor(x_j, x_j') = rho^|j-j'|, generated by the exact O(np) recursion
x_1 ~ N(0,1), x_j = rho x_{j-1} + sqrt(1-rho^2) e_j.  Each replicate draws
an independent train set and an independent held-out test set from the same
law, standardizes with train statistics only, fits, and scores out-of-sample
squared error plus coverage and length of equal-tailed predictive intervals.
"""

from __future__ import annotations

import dataclasses
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .conjugate import PriorSpec, fit_posterior, predictive_batch
from .data import Dataset, standardize, transform_rows
from .ensemble import (
    EnsembleConfig,
    member_plan,
    mixture_interval,
    normalize_log_weights,
)
from .errors import (
    DegenerateMemberWarning,
    DimensionMismatch,
    InvalidSpec,
    NonPositiveB1,
    UnknownScenario,
)
from .projection import ProjectionSpec, compress, draw_projection

DEFAULT_LAMBDA_GRID = tuple(10.0 ** k for k in np.arange(-4.0, 4.0 + 1e-9, 0.5))
_HD_DEFAULT_P = 15000
_HD_TEST_SIZE = 110


@dataclass(frozen=True)
class Scenario:
    id: str
    n: int
    p: int
    beta0: np.ndarray
    sigma2: float
    rho: float
    n_test: int

    def __post_init__(self):
        np.asarray(self.beta0).setflags(write=False)


@dataclass(frozen=True)
class MetricsReport:
    mspe_mean: float
    mspe_boot_se: float
    coverage: float
    pi_len_median: float
    pi_len_q025: float
    pi_len_q975: float
    n_replicates: int
    wall_time_s: float


def scenario(scenario_id: str, p: Optional[int] = None) -> Scenario:
    """Look up one of the simulation scenarios.

    M1..M6 are the moderate-dimension settings (p = 100); HD1/HD2 are the
    high-dimensional ones (n = 110, p defaulting to 15000, overridable).
    """
    sid = scenario_id.upper()
    if sid.startswith("M") and sid in {"M1", "M2", "M3", "M4", "M5", "M6"}:
        if p is not None and p != 100:
            raise UnknownScenario(f"{sid} is defined with p=100, got p={p}")
        p_mod = 100
        beta0 = np.zeros(p_mod)
        if sid in ("M1", "M2"):
            beta0[:5] = 1.2
        elif sid in ("M3", "M4"):
            beta0[:15] = 1.0
        else:
            beta0[:] = 0.2
        n = 70 if sid in ("M1", "M3", "M5") else 110
        return Scenario(id=sid, n=n, p=p_mod, beta0=beta0, sigma2=1.0, rho=0.5, n_test=n)
    if sid in {"HD1", "HD2"}:
        p_hd = _HD_DEFAULT_P if p is None else int(p)
        if p_hd < 5:
            raise UnknownScenario(f"high-dimensional scenario needs p >= 5, got {p_hd}")
        beta0 = np.zeros(p_hd)
        if sid == "HD1":
            beta0[:5] = 1.0
        else:
            beta0[:] = 0.1
        return Scenario(
            id=sid, n=110, p=p_hd, beta0=beta0, sigma2=1.0, rho=0.5, n_test=_HD_TEST_SIZE
        )
    raise UnknownScenario(f"unknown scenario id {scenario_id!r}")


def gen_design(n: int, p: int, rho: float, seed: int) -> np.ndarray:
    """n i.i.d. rows of an AR(1)-correlated standard Gaussian vector."""
    if not abs(rho) < 1:
        raise InvalidSpec(f"|rho| must be < 1, got {rho}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    E = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = E[:, 0]
    c = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + c * E[:, j]
    return X


def gen_response(X: np.ndarray, beta0: np.ndarray, sigma2: float, seed: int) -> np.ndarray:
    """y = X beta0 + sigma z with standard normal z."""
    X = np.asarray(X, dtype=np.float64)
    beta0 = np.asarray(beta0, dtype=np.float64)
    if X.ndim != 2 or beta0.shape != (X.shape[1],):
        raise DimensionMismatch(
            f"X has shape {X.shape}, beta0 has shape {beta0.shape}"
        )
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return X @ beta0 + math.sqrt(sigma2) * rng.standard_normal(X.shape[0])


def mspe(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean squared prediction error."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise DimensionMismatch(f"shapes {y_true.shape} vs {y_pred.shape}")
    return float(np.mean((y_true - y_pred) ** 2))


def coverage_rate(y: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """Fraction of observations inside their [lo, hi] interval."""
    return float(np.mean((lo <= y) & (y <= hi)))


def bootstrap_se(values: np.ndarray, B: int = 500, seed: int = 0) -> float:
    """Standard error of the mean via B bootstrap resamples."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise InvalidSpec("bootstrap_se needs at least 2 values")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    idx = rng.integers(0, values.size, size=(B, values.size))
    # Centering first keeps the resample means well conditioned (and makes a
    # constant input give exactly zero).
    centered = values - values.mean()
    return float(centered[idx].mean(axis=1).std(ddof=1))


# ---------------------------------------------------------------------------
# Ridge baseline: closed form per lambda, lambda chosen by exact leave-one-out
# error on the grid (hat-diagonal identity), plug-in normal intervals.


@dataclass(frozen=True)
class RidgeResult:
    mean: np.ndarray
    intervals: np.ndarray
    lam: float
    loo_sse: np.ndarray
    beta: np.ndarray


def ridge_fit_predict(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_test: np.ndarray,
    lambda_grid=DEFAULT_LAMBDA_GRID,
    level: float = 0.95,
) -> RidgeResult:
    """Ridge with LOO-selected penalty; inputs in the standardized scale.

    Works in the primal (p x p) eigenbasis when p <= n and in the dual
    (n x n) basis otherwise, so the per-lambda sweep is a single
    eigendecomposition plus O(n) work.
    """
    X = np.asarray(X_train, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.float64)
    Xt = np.asarray(X_test, dtype=np.float64)
    n, p = X.shape
    grid = np.asarray(lambda_grid, dtype=np.float64)

    if p <= n:
        d, V = np.linalg.eigh(X.T @ X)
        XV = X @ V  # n x p; hat matrix is XV diag(1/(d+lam)) XV'
        XVy = XV.T @ y
        loo = np.empty(grid.size)
        for g, lam in enumerate(grid):
            inv = 1.0 / (d + lam)
            fitted = XV @ (inv * XVy)
            hat_diag = np.einsum("ij,j,ij->i", XV, inv, XV)
            loo[g] = float(np.sum(((y - fitted) / (1.0 - hat_diag)) ** 2))
        lam = float(grid[np.argmin(loo)])
        inv = 1.0 / (d + lam)
        beta = V @ (inv * XVy)
        fitted = X @ beta
        mean = Xt @ beta
    else:
        G = X @ X.T
        d, U = np.linalg.eigh(G)
        Uy = U.T @ y
        loo = np.empty(grid.size)
        for g, lam in enumerate(grid):
            shrink = d / (d + lam)
            fitted = U @ (shrink * Uy)
            hat_diag = np.einsum("ij,j,ij->i", U, shrink, U)
            loo[g] = float(np.sum(((y - fitted) / (1.0 - hat_diag)) ** 2))
        lam = float(grid[np.argmin(loo)])
        alpha = U @ (Uy / (d + lam))
        beta = X.T @ alpha
        fitted = G @ alpha
        mean = (Xt @ X.T) @ alpha

    sigma2_hat = float(np.mean((y - fitted) ** 2))
    half = float(ndtri(0.5 * (1.0 + level))) * math.sqrt(sigma2_hat)
    intervals = np.column_stack((mean - half, mean + half))
    return RidgeResult(mean=mean, intervals=intervals, lam=lam, loo_sse=loo, beta=beta)


# ---------------------------------------------------------------------------
# Replicated benchmark runs.


def _bcr_predict(Xs, ys, Xt_std, cfg: EnsembleConfig, level: float):
    """Fit all ensemble members and predict, streaming one member at a time
    so only a single projection is alive at once."""
    n, p = Xs.shape
    prior = PriorSpec.identity()
    plans = member_plan(cfg, n, p)
    k = Xt_std.shape[0]
    locs = np.empty((k, len(plans)))
    scale2s = np.empty((k, len(plans)))
    dofs = np.empty(len(plans))
    log_ml = np.empty(len(plans))
    kept = 0
    for plan in plans:
        spec = ProjectionSpec(m=plan.m, p=p, psi=plan.psi, seed=plan.seed)
        phi = draw_projection(spec)
        Z = compress(phi, Xs)
        try:
            post = fit_posterior(Z, ys, prior)
        except NonPositiveB1 as exc:
            warnings.warn(
                f"dropping degenerate member {plan.index}: {exc}",
                DegenerateMemberWarning,
                stacklevel=2,
            )
            continue
        Zt = compress(phi, Xt_std)
        locs[:, kept], scale2s[:, kept] = predictive_batch(post, Zt)
        dofs[kept] = post.n
        log_ml[kept] = post.log_marginal
        kept += 1
    if kept == 0:
        raise NonPositiveB1("every ensemble member was degenerate; nothing to average")
    locs, scale2s = locs[:, :kept], scale2s[:, :kept]
    weights = normalize_log_weights(log_ml[:kept])
    mean = locs @ weights
    intervals = mixture_interval(locs, scale2s, dofs[:kept], weights, level)
    return mean, intervals


def _one_replicate(scen: Scenario, method: str, cfg: EnsembleConfig, seed: int, r: int):
    rep_ss = np.random.SeedSequence(entropy=seed, spawn_key=(r,))
    s_xtr, s_ytr, s_xte, s_yte, s_master = (int(v) for v in rep_ss.generate_state(5, np.uint64))

    X_tr = gen_design(scen.n, scen.p, scen.rho, s_xtr)
    y_tr = gen_response(X_tr, scen.beta0, scen.sigma2, s_ytr)
    X_te = gen_design(scen.n_test, scen.p, scen.rho, s_xte)
    y_te = gen_response(X_te, scen.beta0, scen.sigma2, s_yte)

    std_train, stats = standardize(Dataset(X=X_tr, y=y_tr))
    Xt_std = transform_rows(stats, X_te)
    level = cfg.interval_level

    if method == "BCR":
        rep_cfg = dataclasses.replace(cfg, master_seed=s_master)
        mean, intervals = _bcr_predict(std_train.X, std_train.y, Xt_std, rep_cfg, level)
    elif method == "ridge":
        res = ridge_fit_predict(std_train.X, std_train.y, Xt_std, level=level)
        mean, intervals = res.mean, res.intervals
    else:
        raise InvalidSpec(f"unknown method {method!r}; expected 'BCR' or 'ridge'")

    mean = mean + stats.y_mean
    lo = intervals[:, 0] + stats.y_mean
    hi = intervals[:, 1] + stats.y_mean
    return (
        mspe(y_te, mean),
        coverage_rate(y_te, lo, hi),
        float(np.median(hi - lo)),
    )


def run_replicates(
    scen: Scenario,
    method: str,
    R: int,
    cfg: Optional[EnsembleConfig] = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> MetricsReport:
    """Run R independent replicates of one (scenario, method) cell.

    Each replicate draws fresh train and test sets, standardizes with train
    statistics only, fits, and scores.  Replicates use disjoint seed
    substreams, so results are independent of n_jobs.
    """
    if R < 2:
        raise InvalidSpec(f"need R >= 2 replicates, got {R}")
    if method not in ("BCR", "ridge"):
        raise InvalidSpec(f"unknown method {method!r}; expected 'BCR' or 'ridge'")
    cfg = cfg if cfg is not None else EnsembleConfig()

    start = time.perf_counter()
    results = [None] * R
    if n_jobs == 1:
        for r in range(R):
            results[r] = _one_replicate(scen, method, cfg, seed, r)
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = {
                pool.submit(_one_replicate, scen, method, cfg, seed, r): r
                for r in range(R)
            }
            for fut, r in futures.items():
                results[r] = fut.result()
    wall = time.perf_counter() - start

    mspes = np.array([res[0] for res in results])
    covers = np.array([res[1] for res in results])
    len_medians = np.array([res[2] for res in results])
    boot_seed = int(
        np.random.SeedSequence(entropy=seed, spawn_key=(R, 0)).generate_state(1, np.uint64)[0]
    )
    return MetricsReport(
        mspe_mean=float(mspes.mean()),
        mspe_boot_se=bootstrap_se(mspes, B=500, seed=boot_seed),
        coverage=float(covers.mean()),
        pi_len_median=float(np.median(len_medians)),
        pi_len_q025=float(np.quantile(len_medians, 0.025)),
        pi_len_q975=float(np.quantile(len_medians, 0.975)),
        n_replicates=R,
        wall_time_s=wall,
    )


def report_to_dict(scen: Scenario, method: str, seed: int, report: MetricsReport) -> dict:
    """JSON-ready report.  Wall time is deliberately excluded so identical
    runs serialize to identical bytes; it lives on MetricsReport only."""
    return {
        "schema_version": 1,
        "scenario": scen.id,
        "method": method,
        "n": scen.n,
        "p": scen.p,
        "n_test": scen.n_test,
        "replicates": report.n_replicates,
        "seed": seed,
        "metrics": {
            "mspe_mean": report.mspe_mean,
            "mspe_boot_se": report.mspe_boot_se,
            "coverage": report.coverage,
            "pi_len_median": report.pi_len_median,
            "pi_len_q025": report.pi_len_q025,
            "pi_len_q975": report.pi_len_q975,
        },
    }


CSV_HEADER = (
    "scenario,method,n,p,replicates,seed,"
    "mspe_mean,mspe_boot_se,coverage,pi_len_median,pi_len_q025,pi_len_q975"
)


def report_csv_row(report_dict: dict) -> str:
    """One flat CSV row per (scenario, method) for table assembly."""
    m = report_dict["metrics"]
    fields = [
        report_dict["scenario"],
        report_dict["method"],
        report_dict["n"],
        report_dict["p"],
        report_dict["replicates"],
        report_dict["seed"],
        m["mspe_mean"],
        m["mspe_boot_se"],
        m["coverage"],
        m["pi_len_median"],
        m["pi_len_q025"],
        m["pi_len_q975"],
    ]
    return ",".join(repr(f) if isinstance(f, float) else str(f) for f in fields)
