"""Model averaging over random projections.

An ensemble holds s compressed-regression members, each with its own
subspace dimension m_l (cycled through the window [m_min, m_max]) and
sparsity psi_l drawn uniformly from (psi_low, psi_high).  Posterior model
weights come from the cached log marginal likelihoods under equal prior
weights, normalized in log space.  The predictive distribution at a new
point is the weight-mixture of the members' Student-t predictives.

All member randomness derives from (master_seed, member_index) substreams,
so fitting is embarrassingly parallel and schedule-independent: serial and
parallel fits produce bit-identical ensembles.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .conjugate import (
    CompressedPosterior,
    PriorSpec,
    fit_posterior,
    predictive_batch,
    _t_cdf,
    _t_logpdf,
)
from .data import StandardizationStats
from .errors import (
    BracketFailure,
    DegenerateMemberWarning,
    DimensionMismatch,
    InvalidSpec,
    MemberFitError,
    NonPositiveB1,
    ParseError,
    WindowEmpty,
)
from .projection import ProjectionMatrix, ProjectionSpec, compress, draw_projection

_BRACKET_SCALES = 50.0
_BISECT_MAX_ITER = 200


@dataclass(frozen=True)
class EnsembleConfig:
    """Window and averaging settings.  m_min, m_max, s left as None are
    resolved against the data: m_min = ceil(2 ln p), m_max = min(n, p),
    s = m_max - m_min (one model per integer dimension in the window)."""

    m_min: Optional[int] = None
    m_max: Optional[int] = None
    s: Optional[int] = None
    psi_low: float = 0.1
    psi_high: float = 1.0
    master_seed: int = 0
    interval_level: float = 0.95

    def __post_init__(self):
        if self.s is not None and self.s < 1:
            raise InvalidSpec(f"s must be >= 1, got {self.s}")
        if self.m_min is not None and self.m_min < 1:
            raise InvalidSpec(f"m_min must be >= 1, got {self.m_min}")
        if not 0.1 <= self.psi_low < self.psi_high <= 1.0:
            raise InvalidSpec(
                f"need 0.1 <= psi_low < psi_high <= 1.0, got ({self.psi_low}, {self.psi_high})"
            )
        if not 0 < self.interval_level < 1:
            raise InvalidSpec(f"interval_level must be in (0,1), got {self.interval_level}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidSpec("master_seed must be a 64-bit unsigned integer")


def resolve_window(cfg: EnsembleConfig, n: int, p: int) -> tuple[int, int, int]:
    """Concrete (m_min, m_max, s) for a dataset of size n x p."""
    m_min = cfg.m_min if cfg.m_min is not None else max(1, math.ceil(2.0 * math.log(p)))
    m_max = cfg.m_max if cfg.m_max is not None else min(n, p)
    if m_max > p:
        raise InvalidSpec(f"m_max={m_max} exceeds the predictor dimension p={p}")
    if m_min > m_max:
        raise WindowEmpty(
            f"dimension window empty: m_min={m_min} > m_max={m_max} (n={n}, p={p})"
        )
    s = cfg.s if cfg.s is not None else max(1, m_max - m_min)
    return m_min, m_max, s


@dataclass(frozen=True)
class MemberPlan:
    index: int
    m: int
    psi: float
    seed: int


def member_plan(cfg: EnsembleConfig, n: int, p: int) -> list[MemberPlan]:
    """Deterministic per-member (m, psi, seed) assignments.

    Member l gets dimension m_min + (l mod window width) and a psi drawn
    from the substream keyed by (master_seed, l); projection seeds come
    from a sibling substream, so redraws and parallel fits never interact.
    """
    m_min, m_max, s = resolve_window(cfg, n, p)
    width = m_max - m_min + 1
    plans = []
    for l in range(s):
        psi_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cfg.master_seed, spawn_key=(l, 0))
        )
        psi = float(psi_rng.uniform(cfg.psi_low, cfg.psi_high))
        if psi <= 0.1:
            psi = float(np.nextafter(0.1, 1.0))
        seed = int(
            np.random.SeedSequence(entropy=cfg.master_seed, spawn_key=(l, 1)).generate_state(
                1, np.uint64
            )[0]
        )
        plans.append(MemberPlan(index=l, m=m_min + (l % width), psi=psi, seed=seed))
    return plans


@dataclass(frozen=True)
class EnsembleMember:
    index: int
    projection: ProjectionMatrix
    posterior: CompressedPosterior


@dataclass(frozen=True)
class Ensemble:
    """Fitted model average: surviving members, their raw log marginals,
    normalized weights, and the standardization used at fit time."""

    members: tuple
    log_weights_raw: np.ndarray
    weights: np.ndarray
    stats: Optional[StandardizationStats] = None

    def __post_init__(self):
        if len(self.members) != self.weights.shape[0]:
            raise InvalidSpec("one weight per member required")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12 or np.any(self.weights < 0):
            raise InvalidSpec("weights must form a simplex")
        self.log_weights_raw.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def s(self) -> int:
        return len(self.members)

    @property
    def p(self) -> int:
        return self.members[0].projection.p


def normalize_log_weights(log_marginals: np.ndarray) -> np.ndarray:
    """Posterior model weights from log marginals under equal priors."""
    log_marginals = np.asarray(log_marginals, dtype=np.float64)
    return np.exp(log_marginals - logsumexp(log_marginals))


def _fit_one(X, y, prior, plan: MemberPlan):
    spec = ProjectionSpec(m=plan.m, p=X.shape[1], psi=plan.psi, seed=plan.seed)
    phi = draw_projection(spec)
    Z = compress(phi, X)
    try:
        post = fit_posterior(Z, y, prior)
    except NonPositiveB1 as exc:
        return plan.index, None, str(exc)
    return plan.index, EnsembleMember(index=plan.index, projection=phi, posterior=post), None


_POOL_DATA = {}


def _pool_init(X, y, prior):
    _POOL_DATA["args"] = (X, y, prior)


def _pool_task(plan: MemberPlan):
    X, y, prior = _POOL_DATA["args"]
    return _fit_one(X, y, prior, plan)


def fit_ensemble(
    X: np.ndarray,
    y: np.ndarray,
    cfg: EnsembleConfig,
    prior: Optional[PriorSpec] = None,
    stats: Optional[StandardizationStats] = None,
    n_jobs: int = 1,
) -> Ensemble:
    """Fit all members and compute posterior model weights.

    X and y are expected in the standardized scale (see the data module).
    Members whose posterior is degenerate (NonPositiveB1) are dropped with
    a warning and the weights renormalized over the survivors; any other
    member failure propagates as MemberFitError tagged with the index.
    n_jobs > 1 fits members in a process pool; results are identical to the
    serial fit.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"incompatible shapes X={X.shape}, y={y.shape}")
    if prior is None:
        prior = PriorSpec.identity()
    plans = member_plan(cfg, X.shape[0], X.shape[1])

    results = [None] * len(plans)
    if n_jobs == 1 or len(plans) == 1:
        for plan in plans:
            try:
                results[plan.index] = _fit_one(X, y, prior, plan)
            except Exception as exc:
                raise MemberFitError(plan.index, str(exc)) from exc
    else:
        with ProcessPoolExecutor(
            max_workers=n_jobs, initializer=_pool_init, initargs=(X, y, prior)
        ) as pool:
            futures = {pool.submit(_pool_task, plan): plan.index for plan in plans}
            for fut, idx in futures.items():
                try:
                    results[idx] = fut.result()
                except Exception as exc:
                    raise MemberFitError(idx, str(exc)) from exc

    members = []
    for idx, member, message in results:
        if member is None:
            warnings.warn(
                f"dropping degenerate member {idx}: {message}",
                DegenerateMemberWarning,
                stacklevel=2,
            )
        else:
            members.append(member)
    if not members:
        raise NonPositiveB1("every ensemble member was degenerate; nothing to average")

    log_ml = np.array([mb.posterior.log_marginal for mb in members])
    return Ensemble(
        members=tuple(members),
        log_weights_raw=log_ml,
        weights=normalize_log_weights(log_ml),
        stats=stats,
    )


# ---------------------------------------------------------------------------
# Mixture predictive machinery.
#
# Everything below works on per-member parameter arrays (locations, squared
# scales, degrees of freedom) so the benchmark can stream members without
# materializing an Ensemble.


def member_params(ens: Ensemble, X_new: np.ndarray):
    """Member predictive parameters at new standardized points.

    X_new is k x p; returns (locs, scale2s, dofs) with locs and scale2s of
    shape k x s.
    """
    X_new = np.asarray(X_new, dtype=np.float64)
    if X_new.ndim != 2 or X_new.shape[1] != ens.p:
        raise DimensionMismatch(
            f"X_new has shape {X_new.shape}, ensemble expects {ens.p} columns"
        )
    k = X_new.shape[0]
    locs = np.empty((k, ens.s))
    scale2s = np.empty((k, ens.s))
    dofs = np.empty(ens.s)
    for j, mb in enumerate(ens.members):
        Z_new = compress(mb.projection, X_new)
        locs[:, j], scale2s[:, j] = predictive_batch(mb.posterior, Z_new)
        dofs[j] = mb.posterior.n
    return locs, scale2s, dofs


def mixture_mean(locs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return locs @ weights


def mixture_log_density(locs, scale2s, dofs, weights, y_val) -> np.ndarray:
    """Log of the t-mixture density, evaluated stably in log space.

    y_val broadcasts against the leading axis of locs (k x s).
    """
    y_col = np.asarray(y_val, dtype=np.float64).reshape(-1, 1)
    scales = np.sqrt(scale2s)
    z = (y_col - locs) / scales
    log_comp = _t_logpdf(z, dofs) - np.log(scales)
    return logsumexp(log_comp + np.log(weights), axis=1)


def mixture_cdf(locs, scale2s, dofs, weights, x) -> np.ndarray:
    """Mixture CDF at x (x broadcasts against the leading axis of locs)."""
    x_col = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    z = (x_col - locs) / np.sqrt(scale2s)
    return _t_cdf(z, dofs) @ weights


def mixture_interval(locs, scale2s, dofs, weights, level: float) -> np.ndarray:
    """Equal-tailed mixture interval by vectorized bisection.

    Endpoints are bracketed by the extreme member locations +/- 50 member
    scales and solved to absolute x-tolerance 1e-9 (1 + largest scale).
    Returns a k x 2 array of (lo, hi).
    """
    if not 0 < level < 1:
        raise InvalidSpec(f"level must be in (0,1), got {level}")
    scales = np.sqrt(scale2s)
    lo_b = np.min(locs - _BRACKET_SCALES * scales, axis=1)
    hi_b = np.max(locs + _BRACKET_SCALES * scales, axis=1)
    tol = 1e-9 * (1.0 + np.max(scales, axis=1))

    out = np.empty((locs.shape[0], 2))
    for side, q in enumerate(((1.0 - level) / 2.0, (1.0 + level) / 2.0)):
        f_lo = mixture_cdf(locs, scale2s, dofs, weights, lo_b)
        f_hi = mixture_cdf(locs, scale2s, dofs, weights, hi_b)
        if np.any(f_lo > q) or np.any(f_hi < q):
            raise BracketFailure(
                f"mixture quantile {q} not bracketed by loc +/- {_BRACKET_SCALES} scales"
            )
        lo = lo_b.copy()
        hi = hi_b.copy()
        for _ in range(_BISECT_MAX_ITER):
            mid = 0.5 * (lo + hi)
            below = mixture_cdf(locs, scale2s, dofs, weights, mid) < q
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= tol):
                break
        out[:, side] = 0.5 * (lo + hi)
    return out


def predict_mean(ens: Ensemble, x_new: np.ndarray) -> float:
    """Mixture predictive mean at one standardized point."""
    locs, _, _ = member_params(ens, np.atleast_2d(np.asarray(x_new, dtype=np.float64)))
    return float(mixture_mean(locs, ens.weights)[0])


def predict_mean_batch(ens: Ensemble, X_new: np.ndarray) -> np.ndarray:
    locs, _, _ = member_params(ens, X_new)
    return mixture_mean(locs, ens.weights)


def predictive_log_density(ens: Ensemble, x_new: np.ndarray, y_val: float) -> float:
    locs, scale2s, dofs = member_params(
        ens, np.atleast_2d(np.asarray(x_new, dtype=np.float64))
    )
    return float(mixture_log_density(locs, scale2s, dofs, ens.weights, y_val)[0])


def predictive_interval(ens: Ensemble, x_new: np.ndarray, level: float) -> tuple[float, float]:
    """Equal-tailed level interval of the mixture predictive at one point."""
    locs, scale2s, dofs = member_params(
        ens, np.atleast_2d(np.asarray(x_new, dtype=np.float64))
    )
    lo, hi = mixture_interval(locs, scale2s, dofs, ens.weights, level)[0]
    return float(lo), float(hi)


def predictive_intervals_batch(ens: Ensemble, X_new: np.ndarray, level: float) -> np.ndarray:
    locs, scale2s, dofs = member_params(ens, X_new)
    return mixture_interval(locs, scale2s, dofs, ens.weights, level)


def gamma_mean(ens: Ensemble) -> np.ndarray:
    """Model-averaged coefficient vector in the standardized predictor scale."""
    out = np.zeros(ens.p)
    for w, mb in zip(ens.weights, ens.members):
        out += w * (mb.projection.rows.T @ mb.posterior.mu)
    return out


# ---------------------------------------------------------------------------
# Serialization.  The artifact stores projection specs (not rows: draws are
# deterministic), posterior summaries, weights, and standardization stats in
# a versioned binary container with a JSON header; round-trips bit-exactly.

_MAGIC = b"BCRENS01"
SCHEMA_VERSION = 1


def _array_entry(name, arr, order, payload):
    arr = np.ascontiguousarray(arr)
    raw = arr.astype("<f8").tobytes() if arr.dtype != np.uint8 else arr.tobytes()
    entry = {
        "name": name,
        "dtype": "u1" if arr.dtype == np.uint8 else "<f8",
        "shape": list(arr.shape),
        "offset": sum(len(b) for b in payload),
        "nbytes": len(raw),
    }
    order.append(entry)
    payload.append(raw)


def save_ensemble(ens: Ensemble, path) -> None:
    """Write the fit artifact; identical ensembles produce identical bytes."""
    order: list = []
    payload: list = []
    _array_entry("log_weights_raw", ens.log_weights_raw, order, payload)
    _array_entry("weights", ens.weights, order, payload)
    members_meta = []
    for j, mb in enumerate(ens.members):
        spec = mb.projection.spec
        post = mb.posterior
        members_meta.append(
            {
                "index": mb.index,
                "m": spec.m,
                "p": spec.p,
                "psi": spec.psi,
                "seed": spec.seed,
                "n": post.n,
                "a1": post.a1,
                "b1": post.b1,
                "log_marginal": post.log_marginal,
            }
        )
        _array_entry(f"mu{j}", post.mu, order, payload)
        _array_entry(f"chol{j}", post.chol_A, order, payload)

    stats_meta = None
    if ens.stats is not None:
        stats_meta = {"y_mean": ens.stats.y_mean}
        _array_entry("x_mean", ens.stats.x_mean, order, payload)
        _array_entry("x_scale", ens.stats.x_scale, order, payload)
        _array_entry(
            "constant_columns",
            ens.stats.constant_columns.astype(np.uint8),
            order,
            payload,
        )

    header = json.dumps(
        {
            "schema_version": SCHEMA_VERSION,
            "members": members_meta,
            "stats": stats_meta,
            "arrays": order,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in payload:
            fh.write(raw)


def load_ensemble(path) -> Ensemble:
    """Reload a fit artifact; projections are re-drawn from their specs."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ParseError(f"{path}: not a BCR ensemble artifact")
    (header_len,) = struct.unpack_from("<Q", blob, len(_MAGIC))
    start = len(_MAGIC) + 8
    header = json.loads(blob[start : start + header_len].decode("utf-8"))
    if header["schema_version"] != SCHEMA_VERSION:
        raise ParseError(f"{path}: unsupported schema version {header['schema_version']}")
    base = start + header_len

    arrays = {}
    for entry in header["arrays"]:
        dtype = np.uint8 if entry["dtype"] == "u1" else np.dtype("<f8")
        arr = np.frombuffer(
            blob, dtype=dtype, count=int(np.prod(entry["shape"], dtype=int)),
            offset=base + entry["offset"],
        ).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(np.float64) if dtype != np.uint8 else arr

    members = []
    for j, meta in enumerate(header["members"]):
        spec = ProjectionSpec(m=meta["m"], p=meta["p"], psi=meta["psi"], seed=meta["seed"])
        phi = draw_projection(spec)
        post = CompressedPosterior(
            mu=arrays[f"mu{j}"],
            chol_A=arrays[f"chol{j}"],
            a1=meta["a1"],
            b1=meta["b1"],
            n=meta["n"],
            log_marginal=meta["log_marginal"],
        )
        members.append(EnsembleMember(index=meta["index"], projection=phi, posterior=post))

    stats = None
    if header["stats"] is not None:
        stats = StandardizationStats(
            x_mean=arrays["x_mean"],
            x_scale=arrays["x_scale"],
            y_mean=header["stats"]["y_mean"],
            constant_columns=arrays["constant_columns"].astype(bool),
        )
    return Ensemble(
        members=tuple(members),
        log_weights_raw=arrays["log_weights_raw"],
        weights=arrays["weights"],
        stats=stats,
    )
