"""Discrete covariate grids, observational datasets and saturated baselines."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .exceptions import (
    ArityTooSmall,
    DuplicateName,
    EmptyDataset,
    InvalidCell,
    MissingArm,
    ShapeMismatch,
)

# q_X entries must sum to one within this tolerance
NORM_TOL = 1e-12
# placeholder conditional mean / propensity for cells with no rows
EMPTY_CELL_MEAN = 0.5


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CovariateGrid:
    """All joint levels of a set of discrete covariates.

    Cells are enumerated lexicographically with the last covariate varying
    fastest, so ``cells[i]`` is ``np.unravel_index(i, arities)``.
    """

    names: tuple
    arities: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        object.__setattr__(self, "arities", tuple(int(a) for a in self.arities))

    @property
    def d(self) -> int:
        return int(np.prod(self.arities))

    @property
    def k(self) -> int:
        return len(self.names)

    @property
    def cells(self) -> np.ndarray:
        idx = np.unravel_index(np.arange(self.d), self.arities)
        return np.stack(idx, axis=1)

    def index(self, cell) -> int:
        return int(np.ravel_multi_index(tuple(int(v) for v in cell), self.arities))

    def cell(self, index: int) -> tuple:
        return tuple(int(v) for v in np.unravel_index(int(index), self.arities))

    def indices(self, x: np.ndarray) -> np.ndarray:
        """Vectorized cell index for an ``(n, k)`` integer array of levels."""
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.k:
            raise ShapeMismatch(f"expected {self.k} covariate columns, got shape {x.shape}")
        if x.size and (x.min() < 0 or np.any(x.max(axis=0) >= np.array(self.arities))):
            raise InvalidCell("covariate level outside the grid")
        if len(x) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.ravel_multi_index(tuple(x.T), self.arities).astype(np.int64)

    def position(self, name: str) -> int:
        return self.names.index(name)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "arities": list(self.arities)}

    @classmethod
    def from_dict(cls, obj) -> "CovariateGrid":
        return build_grid(obj["names"], obj["arities"])


def build_grid(names: Sequence[str], arities: Sequence[int]) -> CovariateGrid:
    names = list(names)
    arities = list(arities)
    if not names:
        raise ShapeMismatch("at least one covariate is required")
    if len(names) != len(arities):
        raise ShapeMismatch("names and arities differ in length")
    if len(set(names)) != len(names):
        raise DuplicateName(f"duplicate covariate names in {names}")
    for name, arity in zip(names, arities):
        if int(arity) < 2:
            raise ArityTooSmall(f"covariate {name!r} has arity {arity} < 2")
    return CovariateGrid(tuple(names), tuple(arities))


@dataclass(frozen=True)
class Dataset:
    """Rows of (covariate levels, treatment, outcome) on a fixed grid."""

    grid: CovariateGrid
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.int64).reshape(-1, self.grid.k)
        t = np.asarray(self.t, dtype=np.int64).ravel()
        y = np.asarray(self.y, dtype=np.int64).ravel()
        check_consistent_length(x, t, y)
        if np.any((t != 0) & (t != 1)) or np.any((y != 0) & (y != 1)):
            raise InvalidCell("t and y must be 0/1")
        self.grid.indices(x)
        object.__setattr__(self, "x", _frozen(x, np.int64))
        object.__setattr__(self, "t", _frozen(t, np.int64))
        object.__setattr__(self, "y", _frozen(y, np.int64))

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def cell_index(self) -> np.ndarray:
        return self.grid.indices(self.x)

    def swap_arms(self) -> "Dataset":
        """Relabel treatment and control, which negates every effect."""
        return Dataset(self.grid, self.x, 1 - self.t, self.y)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.x, columns=list(self.grid.names))
        df["t"] = self.t
        df["y"] = self.y
        return df

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def read_dataset(path, grid: Optional[CovariateGrid] = None) -> Dataset:
    """Read the dataset CSV: covariate columns first, then ``t`` and ``y``.

    Without an explicit grid, each covariate's arity is its largest observed
    level plus one (at least 2).
    """
    df = pd.read_csv(path)
    cols = list(df.columns)
    if cols[-2:] != ["t", "y"] or len(cols) < 3:
        raise ShapeMismatch("dataset header must list covariates then t,y")
    names = cols[:-2]
    x = df[names].to_numpy()
    if not np.issubdtype(x.dtype, np.integer):
        raise InvalidCell("covariate levels must be non-negative integers")
    if grid is None:
        top = x.max(axis=0) if len(x) else np.zeros(len(names), dtype=int)
        grid = build_grid(names, [max(2, int(m) + 1) for m in top])
    elif list(grid.names) != names:
        raise ShapeMismatch("dataset columns do not match the grid")
    return Dataset(grid, x, df["t"].to_numpy(), df["y"].to_numpy())


@dataclass(frozen=True)
class BaselineEstimate:
    """Saturated per-cell estimates defining the assumed point."""

    grid: CovariateGrid
    mu0: np.ndarray
    mu1: np.ndarray
    e: np.ndarray
    qx: np.ndarray
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        d = self.grid.d
        for name in ("mu0", "mu1", "e", "qx"):
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            if arr.shape != (d,):
                raise ShapeMismatch(f"{name} has {arr.size} entries, grid has {d} cells")
            if np.any(arr < 0) or np.any(arr > 1):
                raise ShapeMismatch(f"{name} entries must lie in [0, 1]")
            object.__setattr__(self, name, _frozen(arr))
        if abs(self.qx.sum() - 1.0) > NORM_TOL:
            raise ShapeMismatch(f"qx sums to {self.qx.sum()!r}, not 1")
        counts = self.counts
        if counts is None:
            counts = np.zeros((d, 2), dtype=np.int64)
        object.__setattr__(self, "counts", _frozen(np.reshape(counts, (d, 2)), np.int64))

    @property
    def mu(self) -> np.ndarray:
        """Stacked ``(2, d)`` array of control and treated means."""
        return np.stack([self.mu0, self.mu1])

    @property
    def effects(self) -> np.ndarray:
        return self.mu1 - self.mu0

    @property
    def tau(self) -> float:
        return float(np.dot(self.qx, self.effects))

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "mu0": self.mu0.tolist(),
            "mu1": self.mu1.tolist(),
            "e": self.e.tolist(),
            "qx": self.qx.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, obj) -> "BaselineEstimate":
        return cls(
            CovariateGrid.from_dict(obj["grid"]),
            obj["mu0"],
            obj["mu1"],
            obj["e"],
            obj["qx"],
            obj.get("counts"),
        )

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "BaselineEstimate":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class DecisionSpec:
    delta: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.delta):
            raise ValueError("delta must be finite")


def fit_baseline(
    data: Dataset, grid: Optional[CovariateGrid] = None, smoothing: Optional[float] = None
) -> BaselineEstimate:
    """Per-cell outcome means, propensities and covariate frequencies.

    With ``smoothing=s`` each conditional mean is ``(successes + s) / (trials + 2s)``.
    Cells without any rows get ``qx = 0`` and a 0.5 placeholder for the means
    and the propensity.
    """
    grid = data.grid if grid is None else grid
    if data.n == 0:
        raise EmptyDataset("cannot fit a baseline on an empty dataset")
    if smoothing is not None and smoothing <= 0:
        raise ValueError("smoothing must be positive")
    d = grid.d
    idx = grid.indices(data.x)
    trials = np.stack(
        [np.bincount(idx[data.t == arm], minlength=d) for arm in (0, 1)], axis=1
    )
    successes = np.stack(
        [np.bincount(idx[(data.t == arm) & (data.y == 1)], minlength=d) for arm in (0, 1)],
        axis=1,
    )
    total = trials.sum(axis=1)
    populated = total > 0
    if smoothing is None:
        for cell in np.flatnonzero(populated):
            for arm in (0, 1):
                if trials[cell, arm] == 0:
                    raise MissingArm(grid.cell(cell), arm)
        with np.errstate(invalid="ignore", divide="ignore"):
            mu = np.where(trials > 0, successes / np.maximum(trials, 1), EMPTY_CELL_MEAN)
    else:
        mu = (successes + smoothing) / (trials + 2.0 * smoothing)
        mu[~populated] = EMPTY_CELL_MEAN
    e = np.where(populated, trials[:, 1] / np.maximum(total, 1), EMPTY_CELL_MEAN)
    qx = total / total.sum()
    return BaselineEstimate(grid, mu[:, 0], mu[:, 1], e, qx, trials)


class OutcomeImputation(BaseEstimator):
    """Saturated outcome-imputation estimator with a scikit-learn interface.

    Parameters
    ----------
    arities : sequence of int, optional
        Level counts per covariate. Inferred from ``X`` when omitted.
    names : sequence of str, optional
        Covariate names; defaults to ``x0, x1, ...``.
    smoothing : float, optional
        Pseudo-count added to both outcome levels in every cell and arm.
    """

    def __init__(self, arities=None, names=None, smoothing=None):
        self.arities = arities
        self.names = names
        self.smoothing = smoothing

    def fit(self, X, y, treatment):
        X = check_array(X, dtype=np.int64, ensure_min_samples=1)
        y = np.asarray(y).ravel()
        treatment = np.asarray(treatment).ravel()
        check_consistent_length(X, y, treatment)
        k = X.shape[1]
        names = self.names if self.names is not None else [f"x{j}" for j in range(k)]
        arities = self.arities
        if arities is None:
            arities = [max(2, int(m) + 1) for m in X.max(axis=0)]
        self.grid_ = build_grid(names, arities)
        self.baseline_ = fit_baseline(Dataset(self.grid_, X, treatment, y), smoothing=self.smoothing)
        self.mu0_ = self.baseline_.mu0
        self.mu1_ = self.baseline_.mu1
        self.propensity_ = self.baseline_.e
        self.qx_ = self.baseline_.qx
        self.n_features_in_ = k
        return self

    def predict(self, X):
        """Imputed conditional effect ``mu1(x) - mu0(x)`` for each row."""
        check_is_fitted(self, "baseline_")
        X = check_array(X, dtype=np.int64)
        return self.baseline_.effects[self.grid_.indices(X)]

    @property
    def ate_(self) -> float:
        check_is_fitted(self, "baseline_")
        return self.baseline_.tau
