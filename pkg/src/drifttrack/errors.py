"""Exception types. Each carries the CLI exit code it maps to."""


class DriftTrackError(Exception):
    exit_code = 1


class InvalidArgumentError(DriftTrackError, ValueError):
    exit_code = 2


class ConfigError(DriftTrackError, ValueError):
    """Bad configuration: schema violations, unsupported combinations."""

    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class StateError(DriftTrackError, RuntimeError):
    exit_code = 4


class InfeasibleSelectionError(DriftTrackError):
    """No sample count in [1, k_max] meets the target.

    ``best_bound`` is the smallest bound value reached inside the search range.
    """

    exit_code = 3

    def __init__(self, message, best_bound=None, k_max=None, step=None):
        self.best_bound = best_bound
        self.k_max = k_max
        self.step = step
        super().__init__(message)


class NumericalError(DriftTrackError, ArithmeticError):
    exit_code = 4


class AnalysisError(NumericalError):
    """A precondition of a fixed-point or contraction argument does not hold."""


class NotFactorableError(DriftTrackError, TypeError):
    exit_code = 2
