"""Exception hierarchy shared by the carnot modules."""


class CarnotError(Exception):
    """Base class for all errors raised by this package."""


class NotSkewError(CarnotError, ValueError):
    pass


class HormanderError(CarnotError, ValueError):
    """The structure matrices do not bracket-generate the vertical layer."""


class DuplicateFrequencyError(CarnotError, ValueError):
    pass


class PointNotInSubgroupError(CarnotError, ValueError):
    pass


class OrthogonalityError(CarnotError, ValueError):
    """A (w, sigma) pair violates <A w, y> orthogonal to sigma for all y."""


class ConfigError(CarnotError, ValueError):
    """Invalid group or run configuration; the message names the field."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class NotConvergedError(CarnotError, RuntimeError):
    """No solver reached the feasibility tolerance.

    The best (infeasible) result is kept on ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NoRootFoundError(CarnotError, RuntimeError):
    pass
