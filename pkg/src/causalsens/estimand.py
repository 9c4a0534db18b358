"""The average treatment effect as a function of its identifying assumptions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    NonPositiveOddsRatio,
    PropensityOverlapViolation,
    ShapeMismatch,
    UnnormalizedPx,
)
from .model import DecisionSpec

PX_TOL = 1e-9


def _check_px(px) -> np.ndarray:
    px = np.asarray(px, dtype=float)
    if np.any(px < 0) or abs(px.sum() - 1.0) > PX_TOL:
        raise UnnormalizedPx(f"px must be a probability vector (sum={px.sum()!r})")
    return px


def _check_eps(*eps) -> None:
    for arr in eps:
        if np.any(~(np.asarray(arr, dtype=float) > 0)):
            raise NonPositiveOddsRatio("odds ratios must be strictly positive")


@dataclass(frozen=True)
class AssumptionPoint:
    """A full triplet of odds ratios, conditional means and covariate law."""

    eps0: np.ndarray
    eps1: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    px: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("eps0", "eps1", "mu0", "mu1", "px"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            arrays[name] = arr
            object.__setattr__(self, name, arr)
        if len({a.shape for a in arrays.values()}) != 1:
            raise ShapeMismatch("all components must have one entry per cell")
        _check_eps(self.eps0, self.eps1)
        for name in ("mu0", "mu1"):
            if np.any(arrays[name] < 0) or np.any(arrays[name] > 1):
                raise ShapeMismatch(f"{name} must lie in [0, 1]")
        _check_px(self.px)

    @classmethod
    def unconfounded(cls, mu0, mu1, px) -> "AssumptionPoint":
        ones = np.ones(np.size(px))
        return cls(ones, ones, mu0, mu1, px)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("eps0", "eps1", "mu0", "mu1", "px")}


@dataclass(frozen=True)
class JointDistribution:
    """Probabilities ``p(x, t, y)`` stored with shape ``(d, 2, 2)``."""

    pxty: np.ndarray

    def __post_init__(self):
        p = np.array(self.pxty, dtype=float).reshape(-1, 2, 2)
        if np.any(p < 0) or abs(p.sum() - 1.0) > PX_TOL:
            raise UnnormalizedPx("joint distribution must be nonnegative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "pxty", p)

    @property
    def px(self) -> np.ndarray:
        return self.pxty.sum(axis=(1, 2))

    @property
    def propensity(self) -> np.ndarray:
        px = self.px
        treated = self.pxty[:, 1, :].sum(axis=1)
        return np.divide(treated, px, out=np.full_like(px, np.nan), where=px > 0)

    @classmethod
    def from_conditionals(cls, mu0, mu1, e, px) -> "JointDistribution":
        """Joint law with ``P(X)=px``, ``P(T=1|X)=e`` and ``P(Y=1|T,X)=mu_T``."""
        mu0, mu1, e, px = (np.asarray(v, dtype=float) for v in (mu0, mu1, e, px))
        p = np.empty((px.size, 2, 2))
        p[:, 0, 1] = px * (1 - e) * mu0
        p[:, 0, 0] = px * (1 - e) * (1 - mu0)
        p[:, 1, 1] = px * e * mu1
        p[:, 1, 0] = px * e * (1 - mu1)
        return cls(p)


def ate_general(a: AssumptionPoint, e) -> float:
    """ATE under arbitrary odds ratios, with the T|X expectations in closed form."""
    e = np.asarray(e, dtype=float)
    if e.shape != a.px.shape:
        raise ShapeMismatch("propensity must have one entry per cell")
    live = a.px > 0
    px, e = a.px[live], e[live]
    treated = a.mu1[live] * (e + (1 - e) / a.eps1[live])
    control = a.mu0[live] * ((1 - e) + e * a.eps0[live])
    return float(np.dot(px, treated - control))


def ate_unconfounded(mu0, mu1, px) -> float:
    px = _check_px(px)
    mu0 = np.asarray(mu0, dtype=float)
    mu1 = np.asarray(mu1, dtype=float)
    if not (mu0.shape == mu1.shape == px.shape):
        raise ShapeMismatch("mu0, mu1 and px must have the same length")
    return float(np.dot(px, mu1 - mu0))


def ate_ipw(eps0, eps1, e, joint: JointDistribution) -> float:
    """Inverse-propensity-weighted ATE with odds-ratio corrections."""
    eps0 = np.asarray(eps0, dtype=float)
    eps1 = np.asarray(eps1, dtype=float)
    e = np.asarray(e, dtype=float)
    _check_eps(eps0, eps1)
    p = joint.pxty
    if not (eps0.shape == eps1.shape == e.shape == (p.shape[0],)):
        raise ShapeMismatch("eps0, eps1 and e must have one entry per cell")
    live = joint.px > 0
    if np.any(live & ((e <= 0) | (e >= 1))):
        bad = int(np.flatnonzero(live & ((e <= 0) | (e >= 1)))[0])
        raise PropensityOverlapViolation(f"propensity {e[bad]} on cell {bad} with mass")
    p, e, eps0, eps1 = p[live], e[live], eps0[live], eps1[live]
    w1 = e + (1 - e) / eps1
    w0 = e * eps0 + 1 - e
    # only y=1 terms survive: t*y picks p[:,1,1], (1-t)*y picks p[:,0,1]
    return float(np.sum(w1 * p[:, 1, 1] / e - w0 * p[:, 0, 1] / (1 - e)))


def decide(tau: float, spec: DecisionSpec) -> bool:
    return bool(tau > spec.delta)
