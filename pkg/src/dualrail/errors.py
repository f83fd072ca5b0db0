"""Exception hierarchy shared by all dualrail modules."""


class DualRailError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(DualRailError, ValueError):
    pass


class UnknownLabel(DualRailError, KeyError):
    pass


class StateValidationError(DualRailError, ValueError):
    """A vector or density matrix violates normalization, Hermiticity or positivity."""

    def __init__(self, message, *, min_eigenvalue=None, trace=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
        self.trace = trace


class ThresholdError(DualRailError, ValueError):
    """Parametric amplifier driven at or above its oscillation threshold."""


class ModelError(DualRailError, ValueError):
    """A builder was called with a NetworkSpec of the wrong model variant or invalid fields."""


class ConvergenceError(DualRailError, RuntimeError):
    def __init__(self, message, *, residual=None, t_reached=None):
        super().__init__(message)
        self.residual = residual
        self.t_reached = t_reached


class TruncationError(DualRailError, RuntimeError):
    """Fock cutoff too small: the highest retained level carries too much population."""

    def __init__(self, message, *, leak=None):
        super().__init__(message)
        self.leak = leak


class ResourceGuardError(DualRailError, MemoryError):
    pass


class ConfigError(DualRailError, ValueError):
    pass
