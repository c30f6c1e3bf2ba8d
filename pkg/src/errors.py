class SimError(Exception):
    """Base class for every error raised by the simulator"""


class ConfigError(SimError):
    pass


class ParameterError(SimError):
    pass


class NumericalError(SimError):
    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class DomainError(SimError):
    pass


class DegenerateSampleError(SimError):
    pass


class InsufficientSamplesError(SimError):
    pass


class FitFailure(SimError):
    pass


class SimulationFailed(SimError):
    """Raised when the slot loop aborts; carries whatever was summarized"""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
