"""Worst-case sensitivity by dual ascent on the threshold-constrained problem.

The primal problem is ``min D(theta || theta_hat)`` subject to
``tau(theta) <= delta``. The multiplier on the threshold constraint is updated
by projected gradient ascent, and each primal step minimizes the Lagrangian
over the family's feasible set: entropic mirror descent on simplices (and on
each Bernoulli pair for outcome means), projected gradient descent on
``(eps0, 1/eps1)`` for odds ratios.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .divergence import to_sensitivity
from .exceptions import BaselineAlreadyReversed, ZeroMassInput
from .model import BaselineEstimate, DecisionSpec
from .scenarios import (
    AssumptionSpace,
    CovariateSubsetSpace,
    EpsilonSubsetSpace,
    OutcomeSubgroupSpace,
)

logger = logging.getLogger(__name__)


class Status(str, enum.Enum):
    CONVERGED = "converged"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration-limit"


@dataclass(frozen=True)
class SolverOptions:
    eta: float = 1.0
    inner_iters: int = 50
    outer_iters: int = 200_000
    tol_constraint: float = 1e-7
    tol_gap: float = 1e-9
    eta_inner: float = 1.0
    lambda_max: float = 1e6
    eps_floor: float = 1e-8
    init_mix: float = 1e-3

    def __post_init__(self):
        if not self.eta > 0 or not self.eta_inner > 0:
            raise ValueError("step sizes must be positive")
        if self.inner_iters < 1 or self.outer_iters < 1:
            raise ValueError("iteration budgets must be at least 1")
        if not (self.tol_constraint > 0 and self.tol_gap > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class DualAscentResult:
    theta: np.ndarray
    lam: float
    status: Status
    iterations: int
    constraint: float
    history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class WorstCaseReport:
    label: str
    value: float
    divergence_at_opt: float
    argmin_theta: Optional[np.ndarray]
    tau_at_opt: Optional[float]
    status: Status
    dual: float
    iterations: int
    baseline_tau: float
    delta: float

    def to_dict(self) -> dict:
        theta = None if self.argmin_theta is None else [float(v) for v in self.argmin_theta]
        return {
            "space": self.label,
            "status": self.status.value,
            "value": float(self.value),
            "divergence_at_opt": float(self.divergence_at_opt),
            "tau_at_opt": None if self.tau_at_opt is None else float(self.tau_at_opt),
            "argmin_theta": theta,
            "dual": float(self.dual),
            "iterations": int(self.iterations),
            "baseline_tau": float(self.baseline_tau),
            "delta": float(self.delta),
        }


def mirror_step(p, g, eta_inner: float) -> np.ndarray:
    """One entropic mirror descent step on the simplex (last axis)."""
    p = np.asarray(p, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(p < 0) or np.any(p.sum(axis=-1) <= 0):
        raise ZeroMassInput("mirror step needs a nonnegative vector with positive mass")
    z = -eta_inner * g
    # shift by the max for overflow safety; the normalization cancels it
    z = z - np.max(np.where(p > 0, z, -np.inf), axis=-1, keepdims=True)
    w = p * np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def dual_ascent(
    objective: Callable[[np.ndarray], float],
    constraint: Callable[[np.ndarray], float],
    inner_solver: Callable[[np.ndarray, float], np.ndarray],
    theta0,
    bound: float,
    opts: SolverOptions = SolverOptions(),
    record: bool = False,
) -> DualAscentResult:
    """Solve ``min objective(theta)`` s.t. ``constraint(theta) <= bound``.

    ``inner_solver(theta, lam)`` must return (an approximation of) the
    minimizer of ``objective + lam * constraint`` over the feasible set,
    warm-started at ``theta``.
    """
    theta = np.asarray(theta0, dtype=float)
    lam = 0.0
    best_violation = np.inf
    best_feasible = None
    history = []
    for k in range(1, opts.outer_iters + 1):
        new = inner_solver(theta, lam)
        violation = constraint(new) - bound
        change = float(np.max(np.abs(new - theta))) if new.size else 0.0
        theta = new
        best_violation = min(best_violation, violation)
        if violation <= opts.tol_constraint:
            f = objective(theta)
            if best_feasible is None or f < best_feasible[0]:
                best_feasible = (f, theta.copy())
        lam = max(lam + opts.eta * violation, 0.0)
        if record:
            history.append((lam, violation))
        if violation <= opts.tol_constraint and change < opts.tol_gap:
            return DualAscentResult(theta, lam, Status.CONVERGED, k, violation, history)
        if lam > opts.lambda_max and best_violation > opts.tol_constraint:
            return DualAscentResult(theta, lam, Status.INFEASIBLE, k, violation, history)
    if best_feasible is not None:
        theta = best_feasible[1]
    logger.warning("dual ascent stopped at the iteration limit (violation %.3g)", violation)
    return DualAscentResult(theta, lam, Status.ITERATION_LIMIT, opts.outer_iters,
                            constraint(theta) - bound, history)


def _iterate(step, objective, x, inner_iters, tol):
    """Repeat ``step(x, scale)``, halving the scale whenever the objective rises."""
    f = objective(x)
    scale = 1.0
    for _ in range(inner_iters):
        cand = step(x, scale)
        fc = objective(cand)
        if fc > f + 1e-15 * max(1.0, abs(f)):
            scale *= 0.5
            if scale < 1e-12:
                break
            continue
        done = np.max(np.abs(cand - x)) < tol
        x, f = cand, fc
        if done:
            break
    return x


class _Problem:
    """Free coordinates of a space and the Lagrangian pieces over them."""

    def __init__(self, space: AssumptionSpace, opts: SolverOptions):
        self.space = space
        self.opts = opts

    def solve(self, delta: float, record: bool = False) -> DualAscentResult:
        return dual_ascent(self.objective, self.constraint, self.inner, self.start(),
                           delta, self.opts, record)


class _SimplexProblem(_Problem):
    def __init__(self, space: CovariateSubsetSpace, opts):
        super().__init__(space, opts)
        self.support = space.support
        self.q = space.q_subset[self.support]
        self.c = space.tau_coef[self.support]

    def start(self):
        q = self.q
        return (1 - self.opts.init_mix) * q + self.opts.init_mix / q.size

    def objective(self, p):
        return float(np.sum(p * np.log(p / self.q)))

    def constraint(self, p):
        return float(p @ self.c)

    def inner(self, p, lam):
        def lagrangian(x):
            return self.objective(x) + lam * self.constraint(x)

        def step(x, scale):
            g = np.log(x / self.q) + 1.0 + lam * self.c
            return np.maximum(mirror_step(x, g, scale * self.opts.eta_inner), 1e-300)

        return _iterate(step, lagrangian, p, self.opts.inner_iters, self.opts.tol_gap)

    def full_theta(self, p):
        theta = np.zeros(self.space.free_dim)
        theta[self.support] = p
        return theta


class _BernoulliProblem(_Problem):
    def __init__(self, space: OutcomeSubgroupSpace, opts):
        super().__init__(space, opts)
        self.support = space.support
        self.m = space.baseline_theta[self.support]
        self.c = space.tau_coef[self.support]
        self.offset = space.tau_offset + float(
            space.tau_coef[~self.support] @ space.baseline_theta[~self.support]
        )

    def start(self):
        return (1 - self.opts.init_mix) * self.m + self.opts.init_mix * 0.5

    def objective(self, mu):
        m = self.m
        return float(np.sum(mu * np.log(mu / m) + (1 - mu) * np.log((1 - mu) / (1 - m))))

    def constraint(self, mu):
        return self.offset + float(mu @ self.c)

    def inner(self, mu, lam):
        m = self.m

        def lagrangian(x):
            return self.objective(x) + lam * self.constraint(x)

        def step(x, scale):
            # each mean is a point (mu, 1 - mu) on a 2-simplex
            pairs = np.stack([x, 1 - x], axis=-1)
            g = np.stack(
                [np.log(x / m) + 1.0 + lam * self.c, np.log((1 - x) / (1 - m)) + 1.0], axis=-1
            )
            out = mirror_step(pairs, g, scale * self.opts.eta_inner)[..., 0]
            return np.clip(out, 1e-300, 1 - 1e-16)

        return _iterate(step, lagrangian, mu, self.opts.inner_iters, self.opts.tol_gap)

    def full_theta(self, mu):
        theta = self.space.baseline_theta.copy()
        theta[self.support] = mu
        return theta


class _EpsilonProblem(_Problem):
    def __init__(self, space: EpsilonSubsetSpace, opts):
        super().__init__(space, opts)
        self.r = space.reparam_coef

    def start(self):
        return np.ones(self.space.free_dim)

    def objective(self, a):
        return float(np.sum((a - 1.0) ** 2))

    def constraint(self, a):
        return self.space.tau_offset + float(a @ self.r)

    def inner(self, a, lam):
        floor = self.opts.eps_floor

        def lagrangian(x):
            return self.objective(x) + lam * self.constraint(x)

        def step(x, scale):
            g = 2.0 * (x - 1.0) + lam * self.r
            # a step of 1/2 is the exact minimizer of the separable quadratic
            return np.maximum(x - 0.5 * scale * self.opts.eta_inner * g, floor)

        return _iterate(step, lagrangian, a, self.opts.inner_iters, self.opts.tol_gap)

    def full_theta(self, a):
        return self.space.from_reparam(a)


def _problem(space: AssumptionSpace, opts: SolverOptions) -> _Problem:
    if isinstance(space, CovariateSubsetSpace):
        return _SimplexProblem(space, opts)
    if isinstance(space, OutcomeSubgroupSpace):
        return _BernoulliProblem(space, opts)
    if isinstance(space, EpsilonSubsetSpace):
        return _EpsilonProblem(space, opts)
    raise TypeError(f"unsupported space {space!r}")


def worst_case(
    space: AssumptionSpace,
    baseline: Optional[BaselineEstimate] = None,
    spec: DecisionSpec = DecisionSpec(),
    opts: SolverOptions = SolverOptions(),
) -> WorstCaseReport:
    """Largest ``exp(-D)`` over the assumptions in ``space`` that reverse the decision."""
    if baseline is not None and baseline is not space.baseline:
        raise ValueError("space was built on a different baseline")
    tau_hat = space.baseline_tau
    delta = spec.delta
    if not tau_hat > delta:
        raise BaselineAlreadyReversed(
            f"baseline ATE {tau_hat:.6g} is already <= delta {delta:.6g}"
        )

    if space.tau_infimum() > delta:
        return WorstCaseReport(space.label, 0.0, np.inf, None, None, Status.INFEASIBLE,
                               np.inf, 0, tau_hat, delta)

    problem = _problem(space, opts)
    result = problem.solve(delta)
    theta = problem.full_theta(result.theta)
    if result.status is Status.INFEASIBLE:
        return WorstCaseReport(space.label, 0.0, np.inf, theta, space.tau(theta),
                               Status.INFEASIBLE, result.lam, result.iterations, tau_hat, delta)
    D = problem.objective(result.theta)
    return WorstCaseReport(
        label=space.label,
        value=to_sensitivity(max(D, 0.0)),
        divergence_at_opt=D,
        argmin_theta=theta,
        tau_at_opt=space.tau(theta),
        status=result.status,
        dual=result.lam,
        iterations=result.iterations,
        baseline_tau=tau_hat,
        delta=delta,
    )
