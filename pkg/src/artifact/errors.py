"""Error taxonomy shared by all modules.

Every error carries a short machine code and the CLI exit status it maps to
(1 = input error, 2 = numerical failure).
"""


class ArtifactError(Exception):
    code = "error"
    exit_code = 2

    def __init__(self, message="", **context):
        super().__init__(message)
        self.context = context


class InputError(ArtifactError):
    code = "invalid-input"
    exit_code = 1


class InsufficientQuotients(InputError):
    code = "insufficient-quotients"


class UnsupportedRegion(InputError):
    code = "unsupported-region"


class UndefinedDensity(InputError):
    code = "undefined-density"


class RequiredBudget(InputError):
    code = "required-budget"


class NumericalError(ArtifactError):
    code = "numerical-failure"


class PrecisionExhausted(NumericalError):
    code = "precision-exhausted"


class SmallDivisorBreakdown(NumericalError):
    code = "small-divisor-breakdown"


class ContinuationFailed(NumericalError):
    code = "continuation-failed"


class DegenerateCycle(NumericalError):
    code = "degenerate-cycle"


class OutsideUnivalentDomain(NumericalError):
    code = "outside-univalent-domain"


class NearCycleDegeneracy(NumericalError):
    code = "near-cycle-degeneracy"


class OutsideDomain(NumericalError):
    code = "outside-domain"


class InclusionViolation(NumericalError):
    code = "inclusion-violation"


class LiftAmbiguity(NumericalError):
    code = "lift-ambiguity"


class CoordinateUnreachable(NumericalError):
    code = "coordinate-unreachable"


class OutsideCylinder(NumericalError):
    code = "outside-cylinder"


class UnstableDerivative(NumericalError):
    code = "unstable-derivative"


class QuotientTooLarge(NumericalError):
    code = "quotient-too-large"
