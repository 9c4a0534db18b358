"""Synthetic observational studies with confounded assignment and selection."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .exceptions import DimensionMismatch
from .model import BaselineEstimate, Dataset, build_grid


@dataclass(frozen=True)
class SimConfig:
    """Coefficients of the generator.

    ``replicate_map`` lists ``(copy, source)`` pairs of covariate positions:
    the copy is set equal to the source row by row instead of being drawn.
    """

    bern: Tuple[float, ...]
    t_coeff: Tuple[float, ...]
    beta: float
    gamma: Tuple[float, ...]
    delta: Tuple[float, ...]
    sel_y: float
    sel_t: float
    sel_x: Tuple[float, ...]
    replicate_map: Tuple[Tuple[int, int], ...] = field(default=())
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        for name in ("bern", "t_coeff", "gamma", "delta", "sel_x"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(
            self, "replicate_map", tuple((int(a), int(b)) for a, b in self.replicate_map)
        )
        k = len(self.bern)
        for name in ("t_coeff", "gamma", "delta", "sel_x"):
            if len(getattr(self, name)) != k:
                raise DimensionMismatch(f"{name} has {len(getattr(self, name))} entries, expected {k}")
        if any(not 0 < p < 1 for p in self.bern):
            raise DimensionMismatch("Bernoulli rates must lie in (0, 1)")
        for copy, source in self.replicate_map:
            if not (0 <= copy < k and 0 <= source < k) or copy == source:
                raise DimensionMismatch(f"bad replicate pair ({copy}, {source})")
        names = self.names or tuple(f"x{j + 1}" for j in range(k))
        if len(names) != k:
            raise DimensionMismatch("one name per covariate is required")
        object.__setattr__(self, "names", tuple(names))

    @property
    def k(self) -> int:
        return len(self.bern)

    @property
    def grid(self):
        return build_grid(self.names, [2] * self.k)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["replicate_map"] = [list(p) for p in self.replicate_map]
        out["names"] = list(self.names)
        return out

    @classmethod
    def from_dict(cls, obj) -> "SimConfig":
        obj = dict(obj)
        obj["replicate_map"] = tuple(tuple(p) for p in obj.get("replicate_map", ()))
        if obj.get("names") is not None:
            obj["names"] = tuple(obj["names"])
        return cls(**obj)

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


_BASE = dict(
    bern=(0.4, 0.5, 0.6, 0.7),
    t_coeff=(0.0, -3.0, 0.0, 0.0),
    beta=4.0,
    gamma=(1.0, -1.0, 1.0, 0.0),
    delta=(-2.0, -3.0, -1.0, -2.0),
    sel_y=2.0,
    sel_t=1.0,
    sel_x=(10.0, 10.0, 5.0, 1.0),
)

# 0-based source covariate for each appended covariate
_EXTRA_SOURCES = {4: (), 6: (2, 3), 8: (2, 3, 0, 1)}


def default_config(n_covariates: int = 4, replicate: Optional[bool] = None) -> SimConfig:
    """The reference generator with 4, 6 or 8 binary covariates.

    Covariates beyond the fourth repeat the coefficients of a source covariate
    (x5, x6 from x3, x4 and x7, x8 from x1, x2). With ``replicate`` they are
    exact copies of their source; otherwise they are drawn independently with
    the source's rate. By default the 6-covariate variant copies and the
    8-covariate variant draws independently: with four copied pairs every
    subset of five or more covariates would contain a pair, leaving structural
    zeros in its joint law.
    """
    if n_covariates not in _EXTRA_SOURCES:
        raise DimensionMismatch("default configs exist for 4, 6 or 8 covariates")
    if replicate is None:
        replicate = n_covariates == 6
    sources = list(range(4)) + list(_EXTRA_SOURCES[n_covariates])
    cfg = {
        key: tuple(value[s] for s in sources) if isinstance(value, tuple) else value
        for key, value in _BASE.items()
    }
    if replicate:
        cfg["replicate_map"] = tuple((4 + i, s) for i, s in enumerate(_EXTRA_SOURCES[n_covariates]))
    return SimConfig(**cfg)


def _covariates(cfg: SimConfig, n: int, rng) -> np.ndarray:
    x = (rng.random((n, cfg.k)) < np.asarray(cfg.bern)).astype(np.int64)
    for copy, source in cfg.replicate_map:
        x[:, copy] = x[:, source]
    return x


def _outcomes(cfg: SimConfig, x, t, rng) -> np.ndarray:
    logits = cfg.beta * t + x @ np.asarray(cfg.gamma) + (x @ np.asarray(cfg.delta)) * t
    return (rng.random(len(t)) < expit(logits)).astype(np.int64)


def simulate_observational(cfg: SimConfig, n: int, rng, select: bool = True) -> Dataset:
    """Confounded treatment, logistic outcomes, then outcome-dependent selection.

    ``select=False`` skips the selection step and returns all ``n`` rows (the
    selection draws are still consumed, so kept rows match the default run).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng(rng)
    x = _covariates(cfg, n, rng)
    t = (rng.random(n) < expit(x @ np.asarray(cfg.t_coeff))).astype(np.int64)
    y = _outcomes(cfg, x, t, rng)
    sel_logits = cfg.sel_y * y + cfg.sel_t * t + x @ np.asarray(cfg.sel_x)
    keep = rng.random(n) < expit(sel_logits)
    if not select:
        keep[:] = True
    return Dataset(cfg.grid, x[keep], t[keep], y[keep])


def simulate_unbiased(cfg: SimConfig, n: int, rng) -> Dataset:
    """Randomized treatment and no selection, for building reference priors."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng(rng)
    x = _covariates(cfg, n, rng)
    t = (rng.random(n) < 0.5).astype(np.int64)
    y = _outcomes(cfg, x, t, rng)
    return Dataset(cfg.grid, x, t, y)


def true_baseline(cfg: SimConfig) -> BaselineEstimate:
    """Exact population quantities of the generator before selection.

    ``mu`` are the logistic outcome probabilities per cell and arm, ``qx`` the
    covariate law (respecting copies) and ``e`` the assignment propensity.
    """
    grid = cfg.grid
    cells = grid.cells
    rates = np.asarray(cfg.bern)
    free = np.ones(cfg.k, dtype=bool)
    consistent = np.ones(grid.d, dtype=bool)
    for copy, source in cfg.replicate_map:
        free[copy] = False
        consistent &= cells[:, copy] == cells[:, source]
    probs = np.where(cells == 1, rates, 1 - rates)[:, free].prod(axis=1)
    qx = np.where(consistent, probs, 0.0)
    qx = qx / qx.sum()
    base = cells @ np.asarray(cfg.gamma)
    inter = cells @ np.asarray(cfg.delta)
    mu0 = expit(base)
    mu1 = expit(cfg.beta + base + inter)
    e = expit(cells @ np.asarray(cfg.t_coeff))
    return BaselineEstimate(grid, mu0, mu1, e, qx)


def true_ate(cfg: SimConfig) -> float:
    return true_baseline(cfg).tau
