"""scikit-learn style front ends for the two sensitivity criteria.

Both estimators are fit on a baseline (a :class:`BaselineEstimate` or a fitted
:class:`~causalsens.model.OutcomeImputation`) and expose the result as
``value_`` plus the full ``report_``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bayes import (
    DEFAULT_MAX_DRAWS,
    DEFAULT_SAMPLES,
    Prior,
    bsv,
    prior_from_dict,
    uniform_prior,
)
from .model import BaselineEstimate, DecisionSpec, OutcomeImputation
from .scenarios import AssumptionSpace, parse_space
from .worstcase import SolverOptions, worst_case


def _baseline(obj) -> BaselineEstimate:
    if isinstance(obj, BaselineEstimate):
        return obj
    if isinstance(obj, OutcomeImputation):
        check_is_fitted(obj, "baseline_")
        return obj.baseline_
    raise TypeError("fit expects a BaselineEstimate or a fitted OutcomeImputation")


def _space(space, baseline) -> AssumptionSpace:
    if isinstance(space, AssumptionSpace):
        if space.baseline is not baseline:
            return parse_space(space.descriptor(), baseline)
        return space
    return parse_space(space, baseline)


class WorstCaseSensitivity(BaseEstimator):
    """Worst-case sensitivity of the decision ``tau > delta`` over one space.

    Parameters
    ----------
    space : str or dict
        Space shorthand (``"cov:x1,x2"``) or JSON-style descriptor.
    delta : float
        Decision threshold.
    eta, inner_iters, outer_iters, tol_constraint, tol_gap
        Dual ascent settings, see :class:`~causalsens.worstcase.SolverOptions`.
    """

    def __init__(self, space="cov:x0", delta=0.0, eta=1.0, inner_iters=50,
                 outer_iters=200_000, tol_constraint=1e-7, tol_gap=1e-9):
        self.space = space
        self.delta = delta
        self.eta = eta
        self.inner_iters = inner_iters
        self.outer_iters = outer_iters
        self.tol_constraint = tol_constraint
        self.tol_gap = tol_gap

    def fit(self, baseline, y=None):
        baseline = _baseline(baseline)
        self.space_ = _space(self.space, baseline)
        opts = SolverOptions(eta=self.eta, inner_iters=self.inner_iters,
                             outer_iters=self.outer_iters,
                             tol_constraint=self.tol_constraint, tol_gap=self.tol_gap)
        self.report_ = worst_case(self.space_, spec=DecisionSpec(self.delta), opts=opts)
        self.value_ = self.report_.value
        self.argmin_ = self.report_.argmin_theta
        return self


class BayesianSensitivity(BaseEstimator):
    """Rejection-sampling Bayesian sensitivity value over one space.

    ``prior`` is ``"uniform"``, a prior JSON dict or a :class:`Prior`.
    """

    def __init__(self, space="cov:x0", prior="uniform", delta=0.0, n_samples=DEFAULT_SAMPLES,
                 max_draws=DEFAULT_MAX_DRAWS, n_reversal_draws=None, random_state=None):
        self.space = space
        self.prior = prior
        self.delta = delta
        self.n_samples = n_samples
        self.max_draws = max_draws
        self.n_reversal_draws = n_reversal_draws
        self.random_state = random_state

    def _prior(self, space) -> Prior:
        if isinstance(self.prior, Prior):
            return self.prior
        if self.prior == "uniform":
            return uniform_prior(space)
        return prior_from_dict(self.prior)

    def fit(self, baseline, y=None):
        baseline = _baseline(baseline)
        self.space_ = _space(self.space, baseline)
        self.prior_ = self._prior(self.space_)
        rng = self.random_state
        if rng is None:
            rng = np.random.default_rng()
        self.report_ = bsv(self.space_, self.prior_, DecisionSpec(self.delta),
                           m=self.n_samples, n_max=self.max_draws, rng=rng,
                           k=self.n_reversal_draws)
        self.value_ = self.report_.bsv
        self.std_error_ = self.report_.std_error
        self.acceptance_rate_ = self.report_.acceptance_rate
        return self
