"""Divergences between assumption values and the sensitivity transform."""

from __future__ import annotations

import enum

import numpy as np
from scipy.special import rel_entr

from .exceptions import (
    LengthMismatch,
    NegativeDivergence,
    NonPositiveOddsRatio,
    ShapeMismatch,
    Unnormalized,
)

SIMPLEX_TOL = 1e-9


class DivergenceKind(enum.Enum):
    KL_CATEGORICAL = "kl-categorical"
    KL_BERNOULLI_SUM = "kl-bernoulli-sum"
    SQ_EUCLIDEAN_EPS = "sq-euclidean-eps"


def kl_categorical(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise LengthMismatch(f"lengths differ: {p.shape} vs {q.shape}")
    for v in (p, q):
        if np.any(v < 0) or abs(v.sum() - 1.0) > SIMPLEX_TOL:
            raise Unnormalized("operands must be probability vectors")
    # rel_entr handles 0*log(0/q) = 0 and returns inf where q == 0 < p
    return float(np.sum(rel_entr(p, q)))


def bernoulli_kl(mu, ref) -> np.ndarray:
    """Elementwise KL between Bernoulli(mu) and Bernoulli(ref)."""
    mu = np.asarray(mu, dtype=float)
    ref = np.asarray(ref, dtype=float)
    return rel_entr(mu, ref) + rel_entr(1 - mu, 1 - ref)


def kl_outcome(mu, muref, active=None) -> float:
    mu = np.asarray(mu, dtype=float)
    muref = np.asarray(muref, dtype=float)
    if mu.shape != muref.shape:
        raise ShapeMismatch(f"shapes differ: {mu.shape} vs {muref.shape}")
    if active is None:
        active = np.ones(mu.shape, dtype=bool)
    active = np.asarray(active, dtype=bool)
    if active.shape != mu.shape:
        raise ShapeMismatch("active mask must match the means")
    for v in (mu, muref):
        if np.any(v < 0) or np.any(v > 1):
            raise ShapeMismatch("means must lie in [0, 1]")
    return float(np.sum(bernoulli_kl(mu[active], muref[active])))


def sq_dist_eps(eps0, eps1) -> float:
    """Squared distance from unconfoundedness in the ``(eps0, 1/eps1)`` coordinates."""
    eps0 = np.asarray(eps0, dtype=float)
    eps1 = np.asarray(eps1, dtype=float)
    if np.any(~(eps0 > 0)) or np.any(~(eps1 > 0)):
        raise NonPositiveOddsRatio("odds ratios must be strictly positive")
    return float(np.sum((eps0 - 1.0) ** 2) + np.sum((1.0 / eps1 - 1.0) ** 2))


def to_sensitivity(D: float) -> float:
    if np.isnan(D) or D < 0:
        raise NegativeDivergence(f"divergence must be nonnegative, got {D!r}")
    return float(np.exp(-D))
