"""Sparse random projection matrices with orthonormalized rows.

A projection is drawn entrywise from a three-point law controlled by a
sparsity parameter ``psi``, then its rows are made orthonormal by a
modified Gram-Schmidt sweep with one reorthogonalization pass.  Row
orthonormality gives the contraction property ||Phi x|| <= ||x|| for
every x, which downstream modules rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidSpec, RankDeficient

# Residual norm below this during Gram-Schmidt triggers a row redraw.
_PIVOT_FLOOR = 1e-8
_MAX_REDRAWS = 100


@dataclass(frozen=True)
class ProjectionSpec:
    """Defines one projection draw: target dimension m, ambient dimension p,
    sparsity psi in (0.1, 1), and a 64-bit seed."""

    m: int
    p: int
    psi: float
    seed: int

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and isinstance(self.p, (int, np.integer))):
            raise InvalidSpec("m and p must be integers")
        if not 1 <= self.m <= self.p:
            raise InvalidSpec(f"need 1 <= m <= p, got m={self.m}, p={self.p}")
        if not 0.1 < self.psi < 1.0:
            raise InvalidSpec(f"psi must lie in (0.1, 1), got {self.psi}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidSpec(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class ProjectionMatrix:
    """An m x p matrix with orthonormal rows, together with the spec that
    deterministically produced it."""

    spec: ProjectionSpec
    rows: np.ndarray

    def __post_init__(self):
        self.rows.setflags(write=False)

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def p(self) -> int:
        return self.spec.p


def _entries_from_uniforms(u: np.ndarray, psi: float) -> np.ndarray:
    # -sqrt(1/psi) w.p. psi^2, 0 w.p. 2*psi*(1-psi), +sqrt(1/psi) w.p. (1-psi)^2
    scale = np.sqrt(1.0 / psi)
    p_neg = psi * psi
    p_zero = p_neg + 2.0 * psi * (1.0 - psi)
    return np.where(u < p_neg, -scale, np.where(u < p_zero, 0.0, scale))


def draw_raw_entries(spec: ProjectionSpec) -> np.ndarray:
    """Draw the m x p matrix of raw three-point entries, before any
    orthonormalization.  Deterministic in the spec."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    return _entries_from_uniforms(rng.random((spec.m, spec.p)), spec.psi)


def _redraw_row(spec: ProjectionSpec, row: int, attempt: int) -> np.ndarray:
    # Fresh substream keyed by (seed, row, attempt): redraws are independent of
    # the order in which rows are processed.
    ss = np.random.SeedSequence(entropy=spec.seed, spawn_key=(row, attempt))
    rng = np.random.default_rng(ss)
    return _entries_from_uniforms(rng.random(spec.p), spec.psi)


# Rows are orthogonalized in blocks of this size: each block is first
# projected against all finished rows with two matrix products, then swept
# row by row inside the block.  Purely a speed choice (BLAS3 instead of
# row-at-a-time updates); the result is deterministic for a fixed spec.
_GS_BLOCK = 16


def draw_projection(spec: ProjectionSpec) -> ProjectionMatrix:
    """Draw a row-orthonormal random projection.

    Raw entries follow the three-point law of :func:`draw_raw_entries`;
    rows are then orthonormalized by a sequential Gram-Schmidt sweep in
    which every projection is applied twice (one reorthogonalization pass).
    A row whose residual norm falls below 1e-8 is redrawn from the same
    entry law with a fresh substream, up to 100 attempts.

    Raises
    ------
    RankDeficient
        If a row cannot reach numerical independence within 100 redraws.
    """
    m, p = spec.m, spec.p
    work = draw_raw_entries(spec)

    for i in range(m):
        base = (i // _GS_BLOCK) * _GS_BLOCK
        if i == base and i > 0:
            done = work[:i]
            blk = work[i : min(i + _GS_BLOCK, m)]
            for _ in range(2):
                blk -= (blk @ done.T) @ done
        w = work[i]
        attempt = 0
        while True:
            if i > base:
                qb = work[base:i]
                for _ in range(2):
                    w -= qb.T @ (qb @ w)
            norm = np.linalg.norm(w)
            if norm >= _PIVOT_FLOOR:
                break
            attempt += 1
            if attempt > _MAX_REDRAWS:
                raise RankDeficient(
                    f"row {i} of projection (m={m}, p={p}, psi={spec.psi}) "
                    f"remained rank-deficient after {_MAX_REDRAWS} redraws"
                )
            w = _redraw_row(spec, i, attempt)
            if i > base:
                # The sweep at the top of the loop handles the current block;
                # here only the finished blocks need removing.
                q = work[:base]
            else:
                q = work[:i]
            if q.shape[0]:
                for _ in range(2):
                    w = w - q.T @ (q @ w)
        work[i] = w / norm

    return ProjectionMatrix(spec=spec, rows=work)


def compress(phi: ProjectionMatrix, X: np.ndarray) -> np.ndarray:
    """Map an n x p design into the compressed space: Z = X Phi'."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-d, got shape {X.shape}")
    if X.shape[1] != phi.p:
        raise DimensionMismatch(
            f"X has {X.shape[1]} columns but projection expects p={phi.p}"
        )
    return X @ phi.rows.T
