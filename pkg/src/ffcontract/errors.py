"""Exception hierarchy shared by all modules."""


class FFContractError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(FFContractError, ValueError):
    pass


class EvaluationError(FFContractError):
    """A model callable produced a non-finite value."""

    def __init__(self, message, t=None, x=None):
        super().__init__(message)
        self.t = t
        self.x = x


class NumericFailure(FFContractError):
    """An iterative routine did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigurationError(FFContractError):
    pass


class AssumptionViolated(FFContractError):
    """The interval structure required for synthesis does not exist."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class StructuralError(FFContractError):
    pass


class SynthesisInfeasible(FFContractError):
    pass


class PeriodizationError(FFContractError):
    pass


class IntegrationFailure(FFContractError):
    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class DivergenceError(IntegrationFailure):
    pass


class InsufficientData(FFContractError, ValueError):
    pass
