"""Error types raised across the package.

Every error carries a short kebab-case ``code`` so the CLI can emit a
machine-readable error object.
"""


class SensitivityError(ValueError):
    code = "sensitivity-error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class DuplicateName(SensitivityError):
    code = "duplicate-name"


class ArityTooSmall(SensitivityError):
    code = "arity-too-small"


class InvalidCell(SensitivityError):
    code = "invalid-cell"


class EmptyDataset(SensitivityError):
    code = "empty-dataset"


class MissingArm(SensitivityError):
    code = "missing-arm"

    def __init__(self, cell, arm):
        self.cell = tuple(int(v) for v in cell)
        self.arm = int(arm)
        super().__init__(f"cell {self.cell} has no rows with t={self.arm}")


class NonPositiveOddsRatio(SensitivityError):
    code = "non-positive-odds-ratio"


class UnnormalizedPx(SensitivityError):
    code = "unnormalized-px"


class Unnormalized(SensitivityError):
    code = "unnormalized"


class LengthMismatch(SensitivityError):
    code = "length-mismatch"


class ShapeMismatch(SensitivityError):
    code = "shape-mismatch"


class PropensityOverlapViolation(SensitivityError):
    code = "propensity-overlap-violation"


class NegativeDivergence(SensitivityError):
    code = "negative-divergence"


class UnknownCovariate(SensitivityError):
    code = "unknown-covariate"


class EmptySubgroup(SensitivityError):
    code = "empty-subgroup"


class InfeasibleTheta(SensitivityError):
    code = "infeasible-theta"


class EmptyEntries(SensitivityError):
    code = "empty-entries"


class LabelMismatch(SensitivityError):
    code = "label-mismatch"


class TooFew(SensitivityError):
    code = "too-few"


class BaselineAlreadyReversed(SensitivityError):
    code = "baseline-already-reversed"


class ZeroMassInput(SensitivityError):
    code = "zero-mass-input"


class TooFewRows(SensitivityError):
    code = "too-few-rows"


class DegenerateVariance(SensitivityError):
    code = "degenerate-variance"


class IncompatiblePrior(SensitivityError):
    code = "incompatible-prior"


class NoAcceptedSamples(SensitivityError):
    code = "no-accepted-samples"

    def __init__(self, report):
        self.report = report
        super().__init__(
            f"no draw reversed the decision within {report.n_drawn} draws"
        )


class DimensionMismatch(SensitivityError):
    code = "dimension-mismatch"


class SpaceParseError(SensitivityError):
    code = "bad-space"
