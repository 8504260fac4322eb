"""Exception types raised across the package."""


class WeakKamError(Exception):
    """Base class for every error raised by weakkam."""


class ConfigError(WeakKamError):
    pass


class GridMismatch(WeakKamError):
    pass


class NonConvexModel(WeakKamError):
    pass


class UnsupportedModel(WeakKamError):
    pass


class WindowSearchFailed(WeakKamError):
    pass


class WindowTooSmall(WeakKamError):
    pass


class InvalidDiscount(WeakKamError):
    pass


class SolverError(WeakKamError):
    """Iterative solver failed to meet its stopping rule."""


class MaxIterExceeded(SolverError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ScheduleExhausted(SolverError):
    def __init__(self, message, last_gap=None):
        super().__init__(message)
        self.last_gap = last_gap


class DisconnectedGraph(SolverError):
    pass


class NegativeCycle(SolverError):
    pass


class ChainTooShort(WeakKamError):
    pass


class LadderNotConverging(SolverError):
    pass


class InsufficientPoints(WeakKamError):
    pass


class PropertyViolation(WeakKamError):
    """A checked invariant failed; the message names the invariant."""
