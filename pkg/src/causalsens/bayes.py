"""Priors over assumption spaces and rejection-sampling Bayesian sensitivity values."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .exceptions import (
    BaselineAlreadyReversed,
    DegenerateVariance,
    IncompatiblePrior,
    LengthMismatch,
    NoAcceptedSamples,
    TooFewRows,
    Unnormalized,
)
from .model import DecisionSpec
from .scenarios import (
    AssumptionSpace,
    CovariateSubsetSpace,
    EpsilonSubsetSpace,
    OutcomeSubgroupSpace,
)

# draws are generated in blocks of this size so that draw i only depends on the seed
CHUNK = 8192
DEFAULT_SAMPLES = 5000
DEFAULT_MAX_DRAWS = 2_000_000
DEFAULT_K = 1_000_000
# precision of the Beta prior for entries without variance information
DEFAULT_BETA_PRECISION = 10.0


class Prior:
    kind: str
    families: Tuple[type, ...] = ()

    def check(self, space: AssumptionSpace) -> None:
        if not isinstance(space, self.families):
            raise IncompatiblePrior(f"{self.kind} prior cannot be used on {space.label}")

    def draw(self, rng: np.random.Generator, size: int, space: AssumptionSpace) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class DirichletPrior(Prior):
    alpha: Tuple[float, ...]
    kind = "dirichlet"
    families = (CovariateSubsetSpace,)

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        if not alpha or any(not a > 0 for a in alpha):
            raise ValueError("Dirichlet concentrations must be positive")
        object.__setattr__(self, "alpha", alpha)

    def check(self, space):
        super().check(space)
        if len(self.alpha) != space.free_dim:
            raise IncompatiblePrior(
                f"Dirichlet has {len(self.alpha)} components, space needs {space.free_dim}"
            )

    def draw(self, rng, size, space):
        return rng.dirichlet(self.alpha, size=size)

    def to_dict(self):
        return {"kind": self.kind, "alpha": list(self.alpha)}


@dataclass(frozen=True)
class UniformSimplexPrior(Prior):
    kind = "uniform-simplex"
    families = (CovariateSubsetSpace,)

    def draw(self, rng, size, space):
        return rng.dirichlet(np.ones(space.free_dim), size=size)


@dataclass(frozen=True)
class BetaMeansPrior(Prior):
    params: Tuple[Tuple[float, float], ...]
    kind = "beta-means"
    families = (OutcomeSubgroupSpace,)

    def __post_init__(self):
        params = tuple((float(a), float(b)) for a, b in self.params)
        if any(not (a > 0 and b > 0) for a, b in params):
            raise ValueError("Beta parameters must be positive")
        object.__setattr__(self, "params", params)

    def check(self, space):
        super().check(space)
        if len(self.params) != space.free_dim:
            raise IncompatiblePrior(
                f"{len(self.params)} Beta factors for a space of dimension {space.free_dim}"
            )

    def draw(self, rng, size, space):
        p = np.asarray(self.params)
        return rng.beta(p[:, 0], p[:, 1], size=(size, len(p)))

    def to_dict(self):
        return {"kind": self.kind, "params": [list(p) for p in self.params]}


@dataclass(frozen=True)
class UniformBoxPrior(Prior):
    kind = "uniform-box"
    families = (OutcomeSubgroupSpace,)

    def draw(self, rng, size, space):
        return rng.random((size, space.free_dim))


@dataclass(frozen=True)
class TruncatedGaussianEpsPrior(Prior):
    """Independent N(1, sigma^2) truncated to the positives on ``(eps0, 1/eps1)``."""

    sigma: float = 1.0
    kind = "trunc-gaussian-eps"
    families = (EpsilonSubsetSpace,)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def draw(self, rng, size, space):
        s = float(self.sigma)
        a = stats.truncnorm.rvs(-1.0 / s, np.inf, loc=1.0, scale=s,
                                size=(size, space.free_dim), random_state=rng)
        # a positive draw can still round to 0 for tiny sigma-relative tails
        a = np.maximum(a, np.finfo(float).tiny)
        return space.from_reparam(a)

    def to_dict(self):
        return {"kind": self.kind, "sigma": float(self.sigma)}


@dataclass(frozen=True)
class PointMassPrior(Prior):
    theta: Tuple[float, ...]
    kind = "point-mass"
    families = (CovariateSubsetSpace, OutcomeSubgroupSpace, EpsilonSubsetSpace)

    def check(self, space):
        super().check(space)
        space.check(np.asarray(self.theta))

    def draw(self, rng, size, space):
        return np.tile(np.asarray(self.theta, dtype=float), (size, 1))

    def to_dict(self):
        return {"kind": self.kind, "theta": list(self.theta)}


def prior_from_dict(obj) -> Prior:
    kind = obj.get("kind")
    if kind == "dirichlet":
        return DirichletPrior(tuple(obj["alpha"]))
    if kind == "uniform-simplex":
        return UniformSimplexPrior()
    if kind == "uniform-box":
        return UniformBoxPrior()
    if kind == "trunc-gaussian-eps":
        return TruncatedGaussianEpsPrior(float(obj.get("sigma", 1.0)))
    if kind == "beta-means":
        return BetaMeansPrior(tuple(tuple(p) for p in obj["params"]))
    if kind == "point-mass":
        return PointMassPrior(tuple(obj["theta"]))
    raise IncompatiblePrior(f"unknown prior kind {kind!r}")


def uniform_prior(space: AssumptionSpace) -> Prior:
    """The uninformative prior for a space; odds-ratio spaces have none."""
    if isinstance(space, CovariateSubsetSpace):
        return UniformSimplexPrior()
    if isinstance(space, OutcomeSubgroupSpace):
        return UniformBoxPrior()
    raise IncompatiblePrior("no uniform prior exists on the unbounded odds-ratio space")


def sample(prior: Prior, space: AssumptionSpace, rng: np.random.Generator,
           size: Optional[int] = None) -> np.ndarray:
    prior.check(space)
    draws = prior.draw(rng, 1 if size is None else size, space)
    return draws[0] if size is None else draws


def _draw_blocks(prior, space, rng, total):
    """Yield prior draws in fixed-size blocks, ``total`` draws overall."""
    done = 0
    while done < total:
        size = min(CHUNK, total - done)
        yield prior.draw(rng, size, space)
        done += size


def seed_for(seed: int, label: str) -> int:
    """Stable per-space seed so parallel runs do not depend on scheduling."""
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


# ---------------------------------------------------------------------------
# prior fitting


def fit_dirichlet(rows) -> np.ndarray:
    """Method-of-moments Dirichlet concentrations from probability-vector rows."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise LengthMismatch("rows must all have the same length")
    if rows.shape[0] < 2:
        raise TooFewRows("need at least two rows")
    if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-6):
        raise Unnormalized("each row must be a probability vector")
    m = rows.mean(axis=0)
    var = rows.var(axis=0, ddof=1)
    if np.any(var <= 0):
        raise DegenerateVariance("every component needs positive sample variance")
    # Var(p_i) = m_i (1 - m_i) / (s + 1), averaged over components
    s = float(np.mean(m * (1 - m) / var - 1.0))
    if not s > 0:
        raise DegenerateVariance("sample variance too large for a Dirichlet fit")
    return s * m


def fit_beta(mean, var=None, precision: float = DEFAULT_BETA_PRECISION) -> Tuple[float, float]:
    """Beta(a, b) with the given mean and either variance or precision ``a + b``."""
    mean = float(np.clip(mean, 1e-6, 1 - 1e-6))
    if var is not None and var > 0 and var < mean * (1 - mean):
        precision = mean * (1 - mean) / var - 1.0
    return mean * precision, (1 - mean) * precision


def fit_beta_means(rows, precision: float = DEFAULT_BETA_PRECISION) -> BetaMeansPrior:
    """Independent Beta factors matched to per-entry means and variances of ``rows``."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    means = rows.mean(axis=0)
    var = rows.var(axis=0, ddof=1) if rows.shape[0] > 1 else np.zeros(rows.shape[1])
    return BetaMeansPrior(tuple(fit_beta(m, v, precision) for m, v in zip(means, var)))


def empirical_prior(space: AssumptionSpace, baselines: Sequence) -> Prior:
    """Fit a prior to the space's free parameter across reference populations.

    ``baselines`` are baseline estimates on the same grid; each contributes the
    value the space's free parameter takes in that population.
    """
    rows = []
    for ref in baselines:
        if isinstance(space, CovariateSubsetSpace):
            rows.append(CovariateSubsetSpace(ref, space.subset).baseline_theta)
        elif isinstance(space, OutcomeSubgroupSpace):
            rows.append(OutcomeSubgroupSpace(ref, space.t, space.where).baseline_theta)
        else:
            raise IncompatiblePrior("empirical priors need an observable family (cov, out)")
    if isinstance(space, CovariateSubsetSpace):
        return DirichletPrior(tuple(fit_dirichlet(rows)))
    return fit_beta_means(rows)


# ---------------------------------------------------------------------------
# estimators


def wilson_interval(successes: int, n: int, level: float = 0.95) -> Tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    z = stats.norm.ppf(0.5 + level / 2)
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class ReversalEstimate:
    estimate: float
    interval: Tuple[float, float]
    k: int
    reversals: int

    def to_dict(self):
        return {
            "estimate": self.estimate,
            "interval": list(self.interval),
            "k": self.k,
            "reversals": self.reversals,
        }


@dataclass(frozen=True)
class BsvReport:
    label: str
    bsv: float
    std_error: float
    m_accepted: int
    m_target: int
    n_drawn: int
    acceptance_rate: float
    seed: Optional[int]
    prior: dict
    baseline_tau: float
    delta: float
    reversal: Optional[ReversalEstimate] = None
    flags: Tuple[str, ...] = field(default=())

    @property
    def reversal_probability(self):
        return None if self.reversal is None else self.reversal.estimate

    def to_dict(self) -> dict:
        return {
            "space": self.label,
            "bsv": self.bsv,
            "std_error": self.std_error,
            "m_accepted": self.m_accepted,
            "m_target": self.m_target,
            "n_drawn": self.n_drawn,
            "acceptance_rate": self.acceptance_rate,
            "reversal_probability": None if self.reversal is None else self.reversal.to_dict(),
            "seed": self.seed,
            "prior": self.prior,
            "baseline_tau": self.baseline_tau,
            "delta": self.delta,
            "flags": list(self.flags),
        }


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def bsv(
    space: AssumptionSpace,
    prior: Prior,
    spec: DecisionSpec = DecisionSpec(),
    m: int = DEFAULT_SAMPLES,
    n_max: int = DEFAULT_MAX_DRAWS,
    rng=None,
    k: Optional[int] = None,
    strict: bool = False,
) -> BsvReport:
    """Rejection-sampling estimate of the Bayesian sensitivity value.

    Draws from ``prior`` until ``m`` of them satisfy ``tau <= delta`` or
    ``n_max`` draws were made, and averages ``exp(-D)`` over the accepted
    draws. With ``k`` set, the reversal probability is estimated from an
    independent stream of ``k`` further draws. When nothing is accepted the
    report carries ``bsv = 0`` and the ``no-accepted-samples`` flag, or
    :class:`NoAcceptedSamples` is raised if ``strict``.
    """
    prior.check(space)
    if m < 1 or n_max < m:
        raise ValueError("need 1 <= m <= n_max")
    tau_hat = space.baseline_tau
    if not tau_hat > spec.delta:
        raise BaselineAlreadyReversed(
            f"baseline ATE {tau_hat:.6g} is already <= delta {spec.delta:.6g}"
        )
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = _rng(rng)
    main, side = gen.spawn(2) if hasattr(gen, "spawn") else (gen, gen)

    accepted: List[np.ndarray] = []
    count = 0
    n_drawn = 0
    for block in _draw_blocks(prior, space, main, n_max):
        hit = np.flatnonzero(space.tau_batch(block) <= spec.delta)
        need = m - count
        if hit.size >= need:
            accepted.append(block[hit[:need]])
            n_drawn += int(hit[need - 1]) + 1
            count = m
            break
        accepted.append(block[hit])
        count += hit.size
        n_drawn += len(block)

    flags = []
    if count:
        values = np.exp(-space.divergence_batch(np.concatenate(accepted)))
        estimate = float(values.mean())
        se = float(values.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0
    else:
        estimate, se = 0.0, 0.0
        flags.append("no-accepted-samples")
    if 0 < count < m:
        flags.append("draw-budget-exhausted")

    reversal = reversal_probability(space, prior, spec, k, side) if k else None
    report = BsvReport(
        label=space.label,
        bsv=estimate,
        std_error=se,
        m_accepted=count,
        m_target=m,
        n_drawn=n_drawn,
        acceptance_rate=count / n_drawn if n_drawn else 0.0,
        seed=None if seed is None else int(seed),
        prior=prior.to_dict(),
        baseline_tau=tau_hat,
        delta=spec.delta,
        reversal=reversal,
        flags=tuple(flags),
    )
    if strict and not count:
        raise NoAcceptedSamples(report)
    return report


def reversal_probability(
    space: AssumptionSpace,
    prior: Prior,
    spec: DecisionSpec = DecisionSpec(),
    k: int = DEFAULT_K,
    rng=None,
) -> ReversalEstimate:
    """Prior probability that the decision reverses, with a Wilson 95% interval."""
    prior.check(space)
    if k < 1:
        raise ValueError("k must be positive")
    gen = _rng(rng)
    hits = 0
    for block in _draw_blocks(prior, space, gen, k):
        hits += int(np.count_nonzero(space.tau_batch(block) <= spec.delta))
    return ReversalEstimate(hits / k, wilson_interval(hits, k), k, hits)
