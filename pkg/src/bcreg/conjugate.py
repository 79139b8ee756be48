"""Exact conjugate inference for one compressed regression model.

Under a normal prior beta | sigma^2 ~ N(0, sigma^2 Sigma_beta) with the
Jeffreys scale prior pi(sigma^2) proportional to 1/sigma^2, the posterior
given a compressed design Z (n x m) and response y is normal-inverse-gamma
with

    A  = Z'Z + Sigma_beta^{-1}
    mu = A^{-1} Z'y
    a1 = n/2
    b1 = (y'y - y'Z A^{-1} Z'y) / 2

and the one-step-ahead predictive at a compressed point z is Student-t with
n degrees of freedom, location z'mu and squared scale (2 b1/n)(1 + z'A^{-1}z).

The log marginal likelihood is evaluated entirely with m x m factorizations:
the n x n determinant and quadratic form reduce via the Woodbury identity
and the matrix determinant lemma to

    log P = -1/2 (log|A| + log|Sigma_beta|) + (n/2) log 2 + logGamma(n/2)
            - (n/2) log(2 b1) - (n/2) log(2 pi)

All solves go through the Cholesky factor of A; nothing is exponentiated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import betainc, gammaln

from .errors import CholeskyFailure, DimensionMismatch, InvalidSpec, NonPositiveB1

_B1_FLOOR_REL = 1e-12
_CHOL_PIVOT_REL = 1e-12


@dataclass(frozen=True)
class PriorSpec:
    """Diagonal of Sigma_beta.  A length-1 diagonal broadcasts to any m."""

    sigma_beta_diag: np.ndarray

    def __post_init__(self):
        diag = np.atleast_1d(np.asarray(self.sigma_beta_diag, dtype=np.float64))
        if diag.ndim != 1:
            raise InvalidSpec("sigma_beta_diag must be a vector")
        if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
            raise InvalidSpec("sigma_beta_diag entries must be positive and finite")
        object.__setattr__(self, "sigma_beta_diag", diag)
        diag.setflags(write=False)

    @classmethod
    def identity(cls) -> "PriorSpec":
        """Sigma_beta = I, the simulation-study default."""
        return cls(sigma_beta_diag=np.ones(1))

    def diag_for(self, m: int) -> np.ndarray:
        d = self.sigma_beta_diag
        if d.shape[0] == m:
            return d
        if d.shape[0] == 1:
            return np.full(m, d[0])
        raise DimensionMismatch(
            f"prior diagonal has length {d.shape[0]}, model dimension is {m}"
        )


@dataclass(frozen=True)
class StudentT:
    """Location/scale Student-t law; scale2 is the squared scale parameter."""

    loc: float
    scale2: float
    dof: float

    def __post_init__(self):
        if not self.scale2 > 0:
            raise InvalidSpec(f"scale2 must be positive, got {self.scale2}")
        if not self.dof > 0:
            raise InvalidSpec(f"dof must be positive, got {self.dof}")


@dataclass(frozen=True)
class CompressedPosterior:
    """Posterior summary on the compressed space.

    mu and chol_A (lower Cholesky factor of A) determine the t posterior of
    beta; (a1, b1) are the inverse-gamma parameters of sigma^2; log_marginal
    caches the model evidence used for averaging.
    """

    mu: np.ndarray
    chol_A: np.ndarray
    a1: float
    b1: float
    n: int
    log_marginal: float

    def __post_init__(self):
        if np.any(np.diag(self.chol_A) <= 0):
            raise InvalidSpec("chol_A must have a positive diagonal")
        if not self.b1 > 0:
            raise InvalidSpec("b1 must be positive")
        if self.a1 != self.n / 2:
            raise InvalidSpec("a1 must equal n/2")
        self.mu.setflags(write=False)
        self.chol_A.setflags(write=False)

    @property
    def m(self) -> int:
        return self.mu.shape[0]


def _validate_zy(Z: np.ndarray, y: np.ndarray):
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if Z.ndim != 2:
        raise DimensionMismatch(f"Z must be 2-d, got shape {Z.shape}")
    if y.ndim != 1 or y.shape[0] != Z.shape[0]:
        raise DimensionMismatch(f"y has shape {y.shape}, Z has shape {Z.shape}")
    if Z.shape[0] < 1 or Z.shape[1] < 1:
        raise DimensionMismatch("need n >= 1 and m >= 1")
    return Z, y


def _chol(A: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(A)):
        raise CholeskyFailure("non-finite entries in normal-equations matrix")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise CholeskyFailure(str(exc)) from exc
    pivots = np.diag(L) ** 2
    if np.min(pivots) < _CHOL_PIVOT_REL * np.mean(np.diag(A)):
        raise CholeskyFailure("Cholesky pivot below 1e-12 of mean diagonal")
    return L


def fit_posterior(Z: np.ndarray, y: np.ndarray, prior: PriorSpec) -> CompressedPosterior:
    """Exact NIG posterior for one compressed model; caches the log marginal.

    Raises NonPositiveB1 when the residual scale collapses (y numerically in
    the column span of Z), and CholeskyFailure on non-finite input.
    """
    Z, y = _validate_zy(Z, y)
    n, m = Z.shape
    prior_diag = prior.diag_for(m)

    A = Z.T @ Z
    A[np.diag_indices_from(A)] += 1.0 / prior_diag
    L = _chol(A)

    Zty = Z.T @ y
    mu = cho_solve((L, True), Zty)
    yty = float(y @ y)
    b1 = 0.5 * (yty - float(Zty @ mu))
    if b1 <= _B1_FLOOR_REL * yty:
        raise NonPositiveB1(
            f"b1={b1:.3e} with y'y={yty:.3e}: response numerically in column span"
        )

    logdet_A = 2.0 * float(np.sum(np.log(np.diag(L))))
    logdet_sigma = float(np.sum(np.log(prior_diag)))
    half_n = 0.5 * n
    log_ml = (
        -0.5 * (logdet_A + logdet_sigma)
        + half_n * math.log(2.0)
        + float(gammaln(half_n))
        - half_n * math.log(2.0 * b1)
        - half_n * math.log(2.0 * math.pi)
    )

    return CompressedPosterior(
        mu=mu, chol_A=L, a1=half_n, b1=b1, n=n, log_marginal=log_ml
    )


def log_marginal(Z: np.ndarray, y: np.ndarray, prior: PriorSpec) -> float:
    """Log marginal likelihood of one compressed model (m-space evaluation)."""
    return fit_posterior(Z, y, prior).log_marginal


def predictive(post: CompressedPosterior, z_new: np.ndarray) -> StudentT:
    """Student-t predictive law at a compressed point z_new = Phi x_new."""
    z_new = np.asarray(z_new, dtype=np.float64)
    if z_new.shape != (post.m,):
        raise DimensionMismatch(
            f"z_new has shape {z_new.shape}, posterior dimension is {post.m}"
        )
    half = solve_triangular(post.chol_A, z_new, lower=True)
    quad = float(half @ half)
    scale2 = (2.0 * post.b1 / post.n) * (1.0 + quad)
    return StudentT(loc=float(z_new @ post.mu), scale2=scale2, dof=float(post.n))


def predictive_batch(post: CompressedPosterior, Z_new: np.ndarray):
    """Predictive locations and squared scales for many compressed points.

    Z_new is k x m; returns (locs, scale2s), each of length k.
    """
    Z_new = np.asarray(Z_new, dtype=np.float64)
    if Z_new.ndim != 2 or Z_new.shape[1] != post.m:
        raise DimensionMismatch(
            f"Z_new has shape {Z_new.shape}, posterior dimension is {post.m}"
        )
    half = solve_triangular(post.chol_A, Z_new.T, lower=True)
    quad = np.einsum("ij,ij->j", half, half)
    scale2s = (2.0 * post.b1 / post.n) * (1.0 + quad)
    return Z_new @ post.mu, scale2s


def _t_cdf(z, dof):
    """CDF of the standard Student-t at z (vectorized), via the regularized
    incomplete beta function."""
    z = np.asarray(z, dtype=np.float64)
    w = dof / (dof + z * z)
    tail = 0.5 * betainc(0.5 * dof, 0.5, w)
    return np.where(z <= 0, tail, 1.0 - tail)


def student_t_cdf(t: StudentT, x: float) -> float:
    """CDF of a location/scale Student-t; exactly 0.5 at the location."""
    z = (x - t.loc) / math.sqrt(t.scale2)
    return float(_t_cdf(z, t.dof))


def _t_logpdf(z, dof):
    """Log density of the standard Student-t at z (vectorized)."""
    z = np.asarray(z, dtype=np.float64)
    return (
        gammaln(0.5 * (dof + 1.0))
        - gammaln(0.5 * dof)
        - 0.5 * np.log(dof * np.pi)
        - 0.5 * (dof + 1.0) * np.log1p(z * z / dof)
    )


def student_t_logpdf(t: StudentT, x: float) -> float:
    """Log density of a location/scale Student-t."""
    scale = math.sqrt(t.scale2)
    z = (x - t.loc) / scale
    return float(_t_logpdf(z, t.dof)) - math.log(scale)


def log_gamma(x: float) -> float:
    """log Gamma(x) for x > 0."""
    if not x > 0:
        raise InvalidSpec(f"log_gamma requires x > 0, got {x}")
    return float(gammaln(x))
