"""Exception and warning types shared across the package."""


class OptomechError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(OptomechError, ValueError):
    pass


class ContractViolationError(OptomechError, ValueError):
    pass


class ParameterError(OptomechError, ValueError):
    """A parameter set violates one of its invariants."""


class NoCriticalCouplingError(OptomechError, ValueError):
    """kappa1 <= kappa2: the zero-reflectance condition has no real solution."""


class NotAMinimumError(OptomechError, ValueError):
    pass


class ImpossibleEventError(OptomechError, ValueError):
    pass


class UndefinedCorrelatorError(OptomechError, ValueError):
    pass


class TruncationError(OptomechError, RuntimeError):
    pass


class OptimizationFailure(OptomechError, RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class FitError(OptomechError, ValueError):
    pass


class TruncationWarning(UserWarning):
    pass


class RegimeWarning(UserWarning):
    pass
