"""Assumption spaces over covariate subsets, outcome subgroups and odds ratios.

Each space owns a free parameter ``theta`` and knows how to embed it into a
full :class:`~causalsens.estimand.AssumptionPoint`. Because the ATE is affine
in every family's free coordinates (``(eps0, 1/eps1)`` for odds ratios), each
space also precomputes that affine map so batches of parameters can be scored
without rebuilding full triplets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .divergence import DivergenceKind, bernoulli_kl, kl_categorical, kl_outcome, sq_dist_eps
from .estimand import AssumptionPoint, ate_general
from .exceptions import (
    EmptyEntries,
    EmptySubgroup,
    InfeasibleTheta,
    LabelMismatch,
    SpaceParseError,
    TooFew,
    UnknownCovariate,
)
from .model import BaselineEstimate

SIMPLEX_TOL = 1e-9


def _positions(grid, subset) -> List[int]:
    subset = list(subset)
    if not subset:
        raise UnknownCovariate("covariate subset must be nonempty")
    out = []
    for name in subset:
        if name not in grid.names:
            raise UnknownCovariate(f"unknown covariate {name!r}")
        out.append(grid.position(name))
    if len(set(out)) != len(out):
        raise UnknownCovariate(f"repeated covariate in {subset}")
    return out


def _level_index(grid, positions) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Index of each cell's level tuple on the covariates at ``positions``."""
    arities = tuple(grid.arities[j] for j in positions)
    cells = grid.cells
    return np.ravel_multi_index(tuple(cells[:, positions].T), arities), arities


class AssumptionSpace:
    """Base class; subclasses fill in the embedding and the affine ATE map."""

    kind: str
    divergence_kind: DivergenceKind

    def __init__(self, baseline: BaselineEstimate):
        self.baseline = baseline

    @property
    def free_dim(self) -> int:
        return len(self.baseline_theta)

    @property
    def baseline_tau(self) -> float:
        return self.baseline.tau

    def tau(self, theta) -> float:
        """ATE of the embedded triplet, evaluated through the general formula."""
        return ate_general(self.embed(theta), self.baseline.e)

    def __repr__(self):
        return f"{type(self).__name__}({self.label!r})"


class CovariateSubsetSpace(AssumptionSpace):
    """Shift the joint law of ``X_J`` while keeping ``q(X_-J | X_J)`` fixed."""

    kind = "covariate"
    divergence_kind = DivergenceKind.KL_CATEGORICAL

    def __init__(self, baseline: BaselineEstimate, subset: Sequence[str]):
        super().__init__(baseline)
        grid = baseline.grid
        self.positions = _positions(grid, subset)
        self.subset = tuple(grid.names[j] for j in self.positions)
        self.level_of_cell, self.level_arities = _level_index(grid, self.positions)
        n_levels = int(np.prod(self.level_arities))
        qx = baseline.qx
        self.q_subset = np.bincount(self.level_of_cell, weights=qx, minlength=n_levels)
        rest = [j for j in range(grid.k) if j not in self.positions]
        if rest:
            rest_index, rest_arities = _level_index(grid, rest)
            q_rest = np.bincount(rest_index, weights=qx, minlength=int(np.prod(rest_arities)))
            fallback = q_rest[rest_index]
        else:
            fallback = np.ones(grid.d)
        q_level = self.q_subset[self.level_of_cell]
        # q(x_-J | x_J); levels with no mass fall back to the marginal q(x_-J)
        self.conditional = np.where(
            q_level > 0, qx / np.where(q_level > 0, q_level, 1.0), fallback
        )
        self.baseline_theta = self.q_subset.copy()
        self.support = self.q_subset > 0
        self.tau_coef = np.bincount(
            self.level_of_cell,
            weights=self.conditional * baseline.effects,
            minlength=n_levels,
        )
        self.tau_offset = 0.0

    @property
    def label(self) -> str:
        return "cov:" + ",".join(self.subset)

    def descriptor(self) -> dict:
        return {"kind": "covariate", "subset": list(self.subset)}

    def check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.free_dim,):
            raise InfeasibleTheta(f"expected {self.free_dim} simplex coordinates, got {theta.shape}")
        if np.any(theta < 0):
            raise InfeasibleTheta("simplex: negative coordinate")
        if abs(theta.sum() - 1.0) > SIMPLEX_TOL:
            raise InfeasibleTheta(f"simplex: coordinates sum to {theta.sum()!r}")
        return theta

    def embed(self, theta) -> AssumptionPoint:
        theta = self.check(theta)
        px = theta[self.level_of_cell] * self.conditional
        return AssumptionPoint.unconfounded(self.baseline.mu0, self.baseline.mu1, px)

    def divergence(self, theta) -> float:
        return kl_categorical(self.check(theta), self.q_subset)

    def divergence_batch(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(thetas > 0, thetas * np.log(thetas / self.q_subset), 0.0)
        return terms.sum(axis=1)

    def tau_batch(self, thetas) -> np.ndarray:
        return self.tau_offset + np.atleast_2d(thetas) @ self.tau_coef

    def tau_infimum(self) -> float:
        """Smallest ATE reachable at finite divergence (attained at a vertex)."""
        return float(self.tau_coef[self.support].min())


class OutcomeSubgroupSpace(AssumptionSpace):
    """Vary ``mu_t(x)`` independently on every cell matched by a predicate."""

    kind = "outcome"
    divergence_kind = DivergenceKind.KL_BERNOULLI_SUM

    def __init__(self, baseline: BaselineEstimate, t: int, where: Dict[str, int]):
        super().__init__(baseline)
        if t not in (0, 1):
            raise SpaceParseError(f"treatment arm must be 0 or 1, got {t!r}")
        grid = baseline.grid
        self.t = int(t)
        self.where = {}
        mask = np.ones(grid.d, dtype=bool)
        cells = grid.cells
        for name, level in where.items():
            if name not in grid.names:
                raise UnknownCovariate(f"unknown covariate {name!r}")
            self.where[name] = int(level)
            mask &= cells[:, grid.position(name)] == int(level)
        self.where = dict(sorted(self.where.items(), key=lambda kv: grid.position(kv[0])))
        self.cells = np.flatnonzero(mask)
        if self.cells.size == 0:
            raise EmptySubgroup(f"predicate {where} selects no cells")
        self.baseline_theta = baseline.mu[self.t][self.cells].copy()
        m = self.baseline_theta
        # entries whose reference mean is 0 or 1 cannot move at finite divergence
        self.support = (m > 0) & (m < 1)
        sign = 1.0 if self.t == 1 else -1.0
        # with eps = 1 the ATE is sum_x px(x) (mu1 - mu0)
        self.tau_coef = sign * baseline.qx[self.cells]
        self.tau_offset = baseline.tau - float(self.tau_coef @ m)

    @property
    def label(self) -> str:
        parts = [f"t={self.t}"] + [f"{k}={v}" for k, v in self.where.items()]
        return "out:" + ",".join(parts)

    def descriptor(self) -> dict:
        return {"kind": "outcome", "t": self.t, "where": dict(self.where)}

    def check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.free_dim,):
            raise InfeasibleTheta(f"expected {self.free_dim} means, got {theta.shape}")
        if np.any(theta < 0) or np.any(theta > 1):
            raise InfeasibleTheta("unit box: mean outside [0, 1]")
        return theta

    def embed(self, theta) -> AssumptionPoint:
        theta = self.check(theta)
        mu = self.baseline.mu.copy()
        mu[self.t, self.cells] = theta
        return AssumptionPoint.unconfounded(mu[0], mu[1], self.baseline.qx)

    def divergence(self, theta) -> float:
        return kl_outcome(self.check(theta), self.baseline_theta)

    def divergence_batch(self, thetas) -> np.ndarray:
        return bernoulli_kl(np.atleast_2d(thetas), self.baseline_theta).sum(axis=1)

    def tau_batch(self, thetas) -> np.ndarray:
        return self.tau_offset + np.atleast_2d(thetas) @ self.tau_coef

    def tau_infimum(self) -> float:
        m = self.baseline_theta
        best = np.where(self.support, np.where(self.tau_coef < 0, 1.0, 0.0), m)
        return float(self.tau_offset + self.tau_coef @ best)


class EpsilonSubsetSpace(AssumptionSpace):
    """Odds ratios that are piecewise constant in the levels of ``X_J``.

    ``theta`` stacks ``eps0`` for every level followed by ``eps1`` for every
    level. The solver coordinates are ``(eps0, 1/eps1)``, in which both the
    divergence and the ATE take a simple form.
    """

    kind = "epsilon"
    divergence_kind = DivergenceKind.SQ_EUCLIDEAN_EPS

    def __init__(self, baseline: BaselineEstimate, subset: Sequence[str]):
        super().__init__(baseline)
        grid = baseline.grid
        self.positions = _positions(grid, subset)
        self.subset = tuple(grid.names[j] for j in self.positions)
        self.level_of_cell, self.level_arities = _level_index(grid, self.positions)
        self.n_levels = int(np.prod(self.level_arities))
        self.baseline_theta = np.ones(2 * self.n_levels)
        b = baseline
        px, e = b.qx, b.e
        # tau = offset + sum_v treated_coef[v] / eps1[v] - control_coef[v] * eps0[v]
        self.treated_coef = np.bincount(
            self.level_of_cell, weights=px * b.mu1 * (1 - e), minlength=self.n_levels
        )
        self.control_coef = np.bincount(
            self.level_of_cell, weights=px * b.mu0 * e, minlength=self.n_levels
        )
        self.tau_offset = float(np.dot(px, b.mu1 * e - b.mu0 * (1 - e)))
        # gradient of tau in the (eps0, 1/eps1) coordinates
        self.reparam_coef = np.concatenate([-self.control_coef, self.treated_coef])

    @property
    def label(self) -> str:
        return "eps:" + ",".join(self.subset)

    def descriptor(self) -> dict:
        return {"kind": "epsilon", "subset": list(self.subset)}

    def check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.free_dim,):
            raise InfeasibleTheta(f"expected {self.free_dim} odds ratios, got {theta.shape}")
        if np.any(~(theta > 0)) or np.any(~np.isfinite(theta)):
            raise InfeasibleTheta("positive orthant: odds ratios must be positive and finite")
        return theta

    def split(self, theta) -> Tuple[np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        return theta[..., : self.n_levels], theta[..., self.n_levels:]

    def to_reparam(self, theta) -> np.ndarray:
        eps0, eps1 = self.split(theta)
        return np.concatenate([eps0, 1.0 / eps1], axis=-1)

    def from_reparam(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return np.concatenate([a[..., : self.n_levels], 1.0 / a[..., self.n_levels:]], axis=-1)

    def embed(self, theta) -> AssumptionPoint:
        eps0, eps1 = self.split(self.check(theta))
        b = self.baseline
        return AssumptionPoint(
            eps0[self.level_of_cell], eps1[self.level_of_cell], b.mu0, b.mu1, b.qx
        )

    def divergence(self, theta) -> float:
        eps0, eps1 = self.split(self.check(theta))
        return sq_dist_eps(eps0, eps1)

    def divergence_batch(self, thetas) -> np.ndarray:
        a = self.to_reparam(np.atleast_2d(thetas))
        return np.sum((a - 1.0) ** 2, axis=1)

    def tau_batch(self, thetas) -> np.ndarray:
        return self.tau_offset + self.to_reparam(np.atleast_2d(thetas)) @ self.reparam_coef

    def tau_infimum(self) -> float:
        if np.any(self.control_coef > 0):
            return -np.inf
        return self.tau_offset


# ---------------------------------------------------------------------------
# construction and parsing


def covariate_subset_space(baseline, subset) -> CovariateSubsetSpace:
    return CovariateSubsetSpace(baseline, subset)


def outcome_subgroup_space(baseline, t, where) -> OutcomeSubgroupSpace:
    return OutcomeSubgroupSpace(baseline, t, where)


def epsilon_subset_space(baseline, subset) -> EpsilonSubsetSpace:
    return EpsilonSubsetSpace(baseline, subset)


def embed(space: AssumptionSpace, theta) -> AssumptionPoint:
    return space.embed(theta)


def parse_space(spec, baseline: BaselineEstimate) -> AssumptionSpace:
    """Build a space from a JSON descriptor dict or a CLI shorthand string.

    Shorthands: ``cov:x1,x2``, ``out:t=0,age=0`` and ``eps:age,sex``.
    """
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "covariate":
            return CovariateSubsetSpace(baseline, spec["subset"])
        if kind == "epsilon":
            return EpsilonSubsetSpace(baseline, spec["subset"])
        if kind == "outcome":
            return OutcomeSubgroupSpace(baseline, int(spec["t"]), spec.get("where", {}))
        raise SpaceParseError(f"unknown space kind {kind!r}")
    family, _, body = str(spec).partition(":")
    items = [s.strip() for s in body.split(",") if s.strip()]
    if family in ("cov", "eps"):
        cls = CovariateSubsetSpace if family == "cov" else EpsilonSubsetSpace
        return cls(baseline, items)
    if family == "out":
        t = None
        where = {}
        for item in items:
            key, sep, value = item.partition("=")
            if not sep:
                raise SpaceParseError(f"expected key=value in {item!r}")
            try:
                level = int(value)
            except ValueError:
                raise SpaceParseError(f"level must be an integer in {item!r}") from None
            if key == "t":
                t = level
            else:
                where[key] = level
        if t is None:
            raise SpaceParseError("outcome space needs t=0 or t=1")
        return OutcomeSubgroupSpace(baseline, t, where)
    raise SpaceParseError(f"cannot parse space {spec!r}")


def enumerate_spaces(baseline: BaselineEstimate, size: int, family: str) -> List[AssumptionSpace]:
    """Every space of a family built on covariate subsets of a given size.

    Outcome spaces condition on each level tuple of the subset, for both arms.
    """
    grid = baseline.grid
    spaces: List[AssumptionSpace] = []
    for combo in itertools.combinations(grid.names, size):
        if family == "cov":
            spaces.append(CovariateSubsetSpace(baseline, combo))
        elif family == "eps":
            spaces.append(EpsilonSubsetSpace(baseline, combo))
        elif family == "out":
            arities = [grid.arities[grid.position(n)] for n in combo]
            for t in (0, 1):
                for levels in itertools.product(*(range(a) for a in arities)):
                    spaces.append(OutcomeSubgroupSpace(baseline, t, dict(zip(combo, levels))))
        else:
            raise SpaceParseError(f"unknown family {family!r}")
    return spaces


# ---------------------------------------------------------------------------
# rankings


@dataclass(frozen=True)
class Ranking:
    entries: Tuple[Tuple[str, float], ...]

    @property
    def labels(self) -> List[str]:
        return [label for label, _ in self.entries]

    @property
    def values(self) -> List[float]:
        return [value for _, value in self.entries]

    def position(self, label: str) -> int:
        """1-based rank of ``label``."""
        return self.labels.index(label) + 1

    def __len__(self):
        return len(self.entries)


def rank_spaces(entries) -> Ranking:
    """Sort (label, value) pairs by decreasing value, ties by label."""
    items = list(entries.items()) if isinstance(entries, dict) else list(entries)
    if not items:
        raise EmptyEntries("nothing to rank")
    labels = [label for label, _ in items]
    if len(set(labels)) != len(labels):
        raise LabelMismatch("ranking labels must be unique")
    for label, value in items:
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"sensitivity for {label!r} outside [0, 1]: {value!r}")
    ordered = sorted(items, key=lambda kv: (-kv[1], kv[0]))
    return Ranking(tuple((str(label), float(value)) for label, value in ordered))


def spearman(rank_a: Ranking, rank_b: Ranking) -> float:
    """Spearman correlation between the rank positions of two rankings."""
    if set(rank_a.labels) != set(rank_b.labels) or len(rank_a) != len(rank_b):
        raise LabelMismatch("rankings cover different labels")
    n = len(rank_a)
    if n < 2:
        raise TooFew("need at least two ranked entries")
    pos_b = {label: i for i, label in enumerate(rank_b.labels)}
    d2 = sum((i - pos_b[label]) ** 2 for i, label in enumerate(rank_a.labels))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))
