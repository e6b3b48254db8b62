"""Exception hierarchy.

Data problems, configuration problems and solver problems are kept apart so
the CLI can map them onto distinct exit codes.
"""


class OnmfError(Exception):
    """Base class for every error raised by this package."""


# data errors
class DataError(OnmfError):
    pass


class ParseError(DataError):
    pass


class DomainError(DataError):
    pass


class WeightError(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class RejectionOverflow(DataError):
    pass


class ConfigError(OnmfError, ValueError):
    pass


# solver errors
class SolverError(OnmfError):
    pass


class NumericalError(SolverError):
    pass


class DegenerateFeature(SolverError):
    def __init__(self, indices, message=None):
        self.indices = list(indices)
        super().__init__(message or f"features {self.indices} lost all mass")


class FixedPointDivergence(SolverError):
    pass


class EigenFailure(SolverError):
    pass


class CapacityReached(SolverError):
    pass


class ScheduleError(SolverError):
    pass


class DegenerateGram(SolverError):
    pass


class InsufficientTransitions(OnmfError):
    pass
