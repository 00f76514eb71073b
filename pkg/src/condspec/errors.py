"""Exception hierarchy.

Engine errors derive from :class:`CondSpecError`; the CLI maps them to exit
status 3 and configuration errors (:class:`ConfigError`) to exit status 2.
"""


class CondSpecError(Exception):
    """Base class for testbed errors."""


class DomainError(CondSpecError, ValueError):
    """Argument outside the domain of a numerical routine."""


class NotPositiveSemiDefinite(CondSpecError, ValueError):
    """A covariance matrix has a materially negative Cholesky pivot."""


class SingularMatrix(NotPositiveSemiDefinite):
    """A matrix required to be nonsingular has a vanishing pivot."""


class SingularSecondMoment(SingularMatrix):
    pass


class SingularVariance(SingularMatrix):
    pass


class EmptyGrid(CondSpecError, ValueError):
    pass


class BadMeasure(CondSpecError, ValueError):
    pass


class EmptyList(CondSpecError, ValueError):
    pass


class BadParams(CondSpecError, ValueError):
    pass


class EstimationError(CondSpecError):
    """Estimator cannot be computed on this sample.

    The Monte Carlo engine records such replications as invalid.
    """


class EmptyArm(EstimationError):
    pass


class WeakFirstStage(EstimationError):
    pass


class RankDeficient(EstimationError):
    pass


class DegenerateRegressor(EstimationError):
    pass


class DegenerateCriticalValue(CondSpecError):
    """The simulated limit of a statistic has a nonpositive quantile."""


class AllReplicationsInvalid(CondSpecError):
    pass


class DimensionMismatch(CondSpecError, ValueError):
    pass


class ConfigError(Exception):
    """Base class for configuration problems (CLI exit status 2)."""


class ParseError(ConfigError):
    def __init__(self, message, line, column=1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(ConfigError):
    def __init__(self, key, message):
        super().__init__(message)
        self.key = key
