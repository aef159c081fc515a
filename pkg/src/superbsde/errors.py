"""Exception hierarchy shared by every module."""

__all__ = [
    "SuperBsdeError",
    "ConfigError",
    "EvaluationError",
    "GrowthError",
    "SimulationError",
    "InsufficientData",
    "CflError",
    "BlowUpError",
    "FitError",
    "OccupancyError",
    "DivergenceError",
    "KindError",
    "TerminalTimeError",
    "ContractError",
    "IterationError",
    "GradientError",
    "DominanceError",
    "CalibrationError",
    "ManifestError",
]


class SuperBsdeError(Exception):
    """Base class for all package errors."""


class ConfigError(SuperBsdeError, ValueError):
    """Invalid configuration; carries the offending config path when known."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class EvaluationError(SuperBsdeError, ArithmeticError):
    def __init__(self, message, term=None):
        self.term = term
        super().__init__(f"{message} (term: {term})" if term else message)


class GrowthError(SuperBsdeError):
    pass


class SimulationError(SuperBsdeError):
    pass


class InsufficientData(SuperBsdeError):
    pass


class CflError(ConfigError):
    pass


class BlowUpError(SuperBsdeError):
    pass


class FitError(SuperBsdeError):
    pass


class OccupancyError(SuperBsdeError):
    pass


class DivergenceError(SuperBsdeError):
    pass


class KindError(SuperBsdeError, TypeError):
    pass


class TerminalTimeError(SuperBsdeError, ValueError):
    pass


class ContractError(SuperBsdeError):
    pass


class IterationError(SuperBsdeError):
    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class GradientError(SuperBsdeError):
    pass


class DominanceError(SuperBsdeError):
    pass


class CalibrationError(SuperBsdeError):
    pass


class ManifestError(SuperBsdeError):
    pass
