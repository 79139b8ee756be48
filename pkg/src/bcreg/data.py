"""Dataset container, standardization, and CSV ingestion.

Standardization follows the convention used throughout the benchmark:
y and the columns of X are centered, and each X column is scaled to unit
sample standard deviation (denominator n-1).  The intercept is handled
purely by centering; predictions are un-centered by adding y_mean back.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    ConstantColumnWarning,
    DimensionMismatch,
    InvalidDataset,
    MissingResponse,
    NonNumericCell,
    ParseError,
)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: Optional[Sequence[str]] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise InvalidDataset(f"incompatible shapes X={X.shape}, y={y.shape}")
        if X.shape[0] < 2:
            raise InvalidDataset("need at least 2 observations")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidDataset("X and y must be finite (no NaN/Inf)")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise InvalidDataset("feature_names length must equal the column count")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        X.setflags(write=False)
        y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class StandardizationStats:
    """Centering/scaling transform fitted on training data.

    constant_columns flags predictors with no variability; their scale is
    pinned to 1 so that p and the projection dimensions stay stable.
    """

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    constant_columns: np.ndarray

    def __post_init__(self):
        if np.any(self.x_scale <= 0):
            raise InvalidDataset("x_scale entries must be positive")
        for arr in (self.x_mean, self.x_scale, self.constant_columns):
            np.asarray(arr).setflags(write=False)

    @property
    def p(self) -> int:
        return self.x_mean.shape[0]


def standardize(d: Dataset) -> tuple[Dataset, StandardizationStats]:
    """Center y and X, scale X columns to unit sample sd (ddof=1).

    Constant columns get scale 1 (they center to zero) and raise a
    ConstantColumnWarning.
    """
    x_mean = d.X.mean(axis=0)
    x_scale = d.X.std(axis=0, ddof=1)
    constant = x_scale == 0.0
    if np.any(constant):
        idx = np.flatnonzero(constant)
        warnings.warn(
            f"{idx.size} constant column(s) at indices {idx.tolist()}: scale pinned to 1",
            ConstantColumnWarning,
            stacklevel=2,
        )
        x_scale = np.where(constant, 1.0, x_scale)
    y_mean = float(d.y.mean())
    Xs = (d.X - x_mean) / x_scale
    ys = d.y - y_mean
    stats = StandardizationStats(
        x_mean=x_mean, x_scale=x_scale, y_mean=y_mean, constant_columns=constant
    )
    return Dataset(X=Xs, y=ys, feature_names=d.feature_names), stats


def apply_transform(stats: StandardizationStats, x_new: np.ndarray) -> np.ndarray:
    """Map a new predictor vector into the standardized scale."""
    x_new = np.asarray(x_new, dtype=np.float64)
    if x_new.shape != (stats.p,):
        raise DimensionMismatch(
            f"x_new has shape {x_new.shape}, transform expects length {stats.p}"
        )
    return (x_new - stats.x_mean) / stats.x_scale


def invert_transform(stats: StandardizationStats, x_std: np.ndarray) -> np.ndarray:
    """Inverse of apply_transform."""
    x_std = np.asarray(x_std, dtype=np.float64)
    if x_std.shape != (stats.p,):
        raise DimensionMismatch(
            f"x_std has shape {x_std.shape}, transform expects length {stats.p}"
        )
    return x_std * stats.x_scale + stats.x_mean


def transform_rows(stats: StandardizationStats, X: np.ndarray) -> np.ndarray:
    """apply_transform for every row of an n x p matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != stats.p:
        raise DimensionMismatch(
            f"X has shape {X.shape}, transform expects {stats.p} columns"
        )
    return (X - stats.x_mean) / stats.x_scale


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise NonNumericCell(
            f"non-numeric cell {text!r} at row {row}, column {col}"
        ) from None


def load_csv(
    path,
    response_column: Union[str, int],
    has_header: bool = True,
) -> Dataset:
    """Load an RFC-4180-style CSV into a Dataset.

    The declared response column is extracted; all remaining columns become
    predictors in file order.  Row/column locations in errors are 1-based.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]

    if not rows:
        raise ParseError(f"{path}: empty file")

    header = None
    data_rows = rows
    first_data_line = 1
    if has_header:
        header = [name.strip() for name in rows[0]]
        data_rows = rows[1:]
        first_data_line = 2

    ncol = len(rows[0])
    if isinstance(response_column, int) or (
        isinstance(response_column, str) and response_column.lstrip("-").isdigit()
    ):
        resp_idx = int(response_column)
        if not 0 <= resp_idx < ncol:
            raise MissingResponse(
                f"response index {resp_idx} out of range for {ncol} columns"
            )
    else:
        if header is None:
            raise MissingResponse(
                "response selected by name but the file has no header"
            )
        try:
            resp_idx = header.index(response_column)
        except ValueError:
            raise MissingResponse(
                f"response column {response_column!r} not in header {header}"
            ) from None

    y_vals = []
    x_vals = []
    for i, row in enumerate(data_rows):
        line = first_data_line + i
        if len(row) != ncol:
            raise ParseError(
                f"row {line} has {len(row)} cells, expected {ncol}"
            )
        parsed = [_parse_cell(cell, line, j + 1) for j, cell in enumerate(row)]
        y_vals.append(parsed[resp_idx])
        x_vals.append([v for j, v in enumerate(parsed) if j != resp_idx])

    if header is not None:
        feature_names = [name for j, name in enumerate(header) if j != resp_idx]
    else:
        feature_names = None
    return Dataset(X=np.asarray(x_vals), y=np.asarray(y_vals), feature_names=feature_names)


def load_features_csv(path, has_header: bool = True) -> np.ndarray:
    """Load a predictor-only CSV (no response column) as an n x p matrix."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ParseError(f"{path}: empty file")
    data_rows = rows[1:] if has_header else rows
    if not data_rows:
        raise ParseError(f"{path}: no data rows")
    first_data_line = 2 if has_header else 1
    ncol = len(rows[0])
    out = []
    for i, row in enumerate(data_rows):
        line = first_data_line + i
        if len(row) != ncol:
            raise ParseError(f"row {line} has {len(row)} cells, expected {ncol}")
        out.append([_parse_cell(cell, line, j + 1) for j, cell in enumerate(row)])
    return np.asarray(out, dtype=np.float64)
