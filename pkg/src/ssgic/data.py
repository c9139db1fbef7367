"""Dataset container, CSV ingestion and column standardization.

Predictor sets are plain tuples of strictly increasing 1-based column
indices; index 0 denotes the intercept and is never a member.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

PredictorSet = tuple  # tuple[int, ...], sorted, 1-based


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


def predictor_set(indices: Iterable[int], p: Optional[int] = None) -> PredictorSet:
    """Normalize ``indices`` into a sorted tuple of 1-based predictor indices."""
    out = tuple(sorted(int(i) for i in indices))
    if len(set(out)) != len(out):
        raise DataError(f"duplicate predictor index in {out}")
    if out and out[0] < 1:
        raise DataError("predictor indices are 1-based; 0 is the intercept")
    if p is not None and out and out[-1] > p:
        raise DataError(f"predictor index {out[-1]} exceeds p={p}")
    return out


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """An n x p predictor matrix with a binary response.

    Parameters
    ----------
    x : ndarray of shape (n, p)
        Predictors, one row per observation. The intercept is not stored.
    y : ndarray of shape (n,)
        Response with entries in {0, 1}.
    standardized : bool
        Whether the columns of ``x`` have been centred and scaled.
    column_means, column_scales : ndarray of shape (p,)
        Pre-standardization column statistics (zeros and ones for raw data).
    names : tuple of str
        Predictor column names.
    """

    x: np.ndarray
    y: np.ndarray
    standardized: bool = False
    column_means: np.ndarray = field(default=None)
    column_scales: np.ndarray = field(default=None)
    names: tuple = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2:
            raise DataError(f"x must be 2-dimensional, got shape {x.shape}")
        n, p = x.shape
        if n < 1 or p < 1:
            raise DataError("dataset needs n >= 1 and p >= 1")
        if not np.all(np.isfinite(x)):
            raise DataError("x contains non-finite values")
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if y.shape[0] != n:
            raise DataError(f"y has length {y.shape[0]}, expected {n}")
        bad = np.flatnonzero((y != 0.0) & (y != 1.0))
        if bad.size:
            raise DataError(f"non-binary response at row {int(bad[0]) + 1}")
        if n > 1:
            const = np.flatnonzero(np.ptp(x, axis=0) == 0.0)
            if const.size:
                raise DataError(f"constant predictor in column {int(const[0]) + 1}")

        means = np.zeros(p) if self.column_means is None else np.asarray(self.column_means, float)
        scales = np.ones(p) if self.column_scales is None else np.asarray(self.column_scales, float)
        if means.shape != (p,) or scales.shape != (p,):
            raise DataError("column statistics must have length p")
        if np.any(scales <= 0):
            raise DataError("column scales must be strictly positive")
        names = tuple(f"x{j + 1}" for j in range(p)) if self.names is None else tuple(self.names)
        if len(names) != p:
            raise DataError("names must have length p")

        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "column_means", _readonly(means))
        object.__setattr__(self, "column_scales", _readonly(scales))
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def columns(self, w: Sequence[int]) -> np.ndarray:
        """Submatrix of the predictors in ``w`` (1-based indices)."""
        idx = np.asarray(w, dtype=np.intp) - 1
        return self.x[:, idx]

    def subset(self, rows) -> "Dataset":
        """Row subset sharing this dataset's standardization metadata."""
        return Dataset(
            self.x[rows],
            self.y[rows],
            standardized=self.standardized,
            column_means=self.column_means,
            column_scales=self.column_scales,
            names=self.names,
        )


def load_csv(path, response_column: str = "y") -> Dataset:
    """Read a headered CSV file into an unstandardized :class:`Dataset`.

    All columns other than ``response_column`` become predictors, in file
    order. Missing values are not supported.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if response_column not in header:
            raise DataError(f"response column {response_column!r} not in header")
        yi = header.index(response_column)
        rows = []
        for k, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {k} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataError(f"non-numeric cell in row {k}") from None
    if not rows:
        raise DataError(f"{path} has no data rows")
    arr = np.array(rows, dtype=np.float64)
    y = arr[:, yi]
    bad = np.flatnonzero((y != 0.0) & (y != 1.0))
    if bad.size:
        raise DataError(f"non-binary response at row {int(bad[0]) + 1}")
    keep = [j for j in range(len(header)) if j != yi]
    names = tuple(header[j] for j in keep)
    x = arr[:, keep]
    const = np.flatnonzero(np.ptp(x, axis=0) == 0.0) if x.shape[0] > 1 else []
    if len(const):
        raise DataError(f"constant predictor {names[const[0]]!r}")
    return Dataset(x, y, names=names)


def write_csv(d: Dataset, path, response_column: str = "y") -> None:
    """Write the raw (unstandardized view of) ``d`` with the response first."""
    x = d.x * d.column_scales + d.column_means if d.standardized else d.x
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([response_column, *d.names])
        for yi, row in zip(d.y, x):
            writer.writerow([int(yi), *(repr(float(v)) for v in row)])


def standardize(d: Dataset) -> Dataset:
    """Centre each column and scale it to unit sample standard deviation.

    Uses the n - 1 divisor. The original statistics are kept on the result so
    coefficients can be mapped back with :func:`destandardize_coefficients`.
    """
    if d.standardized:
        raise DataError("dataset is already standardized")
    if d.n < 2:
        raise DataError("standardization needs n >= 2")
    means = d.x.mean(axis=0)
    centred = d.x - means
    scales = centred.std(axis=0, ddof=1)
    if np.any(scales == 0):
        raise DataError("constant predictor")
    z = centred / scales
    # second centring pass removes O(eps * |mean|) residue
    z -= z.mean(axis=0)
    return Dataset(z, d.y, standardized=True, column_means=means, column_scales=scales, names=d.names)


def destandardize_coefficients(d: Dataset, intercept: float, coefs) -> tuple[float, np.ndarray]:
    """Map a linear predictor fitted on standardized columns to the raw scale."""
    if not d.standardized:
        raise DataError("dataset is not standardized")
    coefs = np.asarray(coefs, dtype=np.float64)
    if coefs.shape != (d.p,):
        raise DataError(f"expected {d.p} coefficients, got {coefs.shape}")
    raw = coefs / d.column_scales
    return float(intercept - raw @ d.column_means), raw
