"""Worst-case and Bayesian sensitivity of binary causal decisions."""

__version__ = "0.1.0"

from .bayes import (
    BetaMeansPrior,
    BsvReport,
    DirichletPrior,
    PointMassPrior,
    TruncatedGaussianEpsPrior,
    UniformBoxPrior,
    UniformSimplexPrior,
    bsv,
    empirical_prior,
    fit_dirichlet,
    reversal_probability,
)
from .estimand import AssumptionPoint, JointDistribution, ate_general, ate_ipw, ate_unconfounded, decide
from .estimators import BayesianSensitivity, WorstCaseSensitivity
from .model import (
    BaselineEstimate,
    CovariateGrid,
    Dataset,
    DecisionSpec,
    OutcomeImputation,
    build_grid,
    fit_baseline,
    read_dataset,
)
from .scenarios import (
    CovariateSubsetSpace,
    EpsilonSubsetSpace,
    OutcomeSubgroupSpace,
    parse_space,
    rank_spaces,
    spearman,
)
from .worstcase import SolverOptions, WorstCaseReport, worst_case
from .simdata import SimConfig, default_config, simulate_observational, simulate_unbiased, true_ate
