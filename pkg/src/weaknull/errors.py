"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`WeakNullError`,
so callers (and the CLI) can catch one type and map subclasses to exit codes.
"""


class WeakNullError(Exception):
    """Base class for all package errors."""

    exit_code = 1


# -- data validation -------------------------------------------------------


class ValidationError(WeakNullError, ValueError):
    exit_code = 3


class ArmTooSmall(ValidationError):
    pass


class StratumCellTooSmall(ValidationError):
    pass


class MixedClusterTreatment(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ParseError(ValidationError):
    """Malformed input file; ``line`` is the 1-based line number when known."""

    exit_code = 2

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# -- contrasts and hypotheses ----------------------------------------------


class ContrastError(WeakNullError, ValueError):
    exit_code = 3


class NotContrast(ContrastError):
    pass


class RankDeficient(ContrastError):
    pass


class BadDoses(ContrastError):
    pass


class CrossEntryComparison(ContrastError):
    pass


class CapExceeded(WeakNullError, ValueError):
    exit_code = 3


class StratumTargetMismatch(ContrastError):
    pass


# -- numerics --------------------------------------------------------------


class NumericalError(WeakNullError, ArithmeticError):
    exit_code = 4


class DegenerateVariance(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class SingularCovariance(NumericalError):
    pass


class SingularDenominator(NumericalError):
    pass


class TooManyDegenerateDraws(NumericalError):
    pass


class UnsupportedStatistic(WeakNullError, ValueError):
    exit_code = 3
