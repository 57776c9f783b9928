"""Exception and warning types raised across the package."""


class EntangleKitError(Exception):
    """Base class for all package errors."""


class DimensionError(EntangleKitError, ValueError):
    """Shapes or subsystem dimensions are inconsistent."""


class ContractViolation(EntangleKitError, ValueError):
    """An input breaks a documented precondition (e.g. not Hermitian)."""


class NormalizationError(EntangleKitError, ValueError):
    """A vector that must be normalized has zero norm."""


class DomainError(EntangleKitError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class CapacityError(EntangleKitError, ValueError):
    """A simulation request exceeds the supported register size."""


class StratificationError(EntangleKitError, ValueError):
    """A class has fewer members than the requested number of folds."""


class GenerationExhausted(EntangleKitError, RuntimeError):
    """Rejection sampling ran out of tries before accepting a sample."""


class CalibrationError(EntangleKitError, RuntimeError):
    """No summand count puts the mean purity inside the requested band.

    ``table`` holds the ``(k, mean_purity)`` pairs probed during the search.
    """

    def __init__(self, message, table=()):
        super().__init__(message)
        self.table = list(table)


class ConvergenceWarning(UserWarning):
    """The SMO solver hit its iteration cap; ``model`` is the best iterate."""

    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model
