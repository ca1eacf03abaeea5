"""Exception hierarchy shared by all modules."""


class BergmanError(Exception):
    """Base class for computational errors raised by the package."""


class OutOfChartError(BergmanError, ValueError):
    pass


class NonIntegrableError(BergmanError, ValueError):
    pass


class AccuracyError(BergmanError):
    """A quadrature or truncation gate did not reach the requested tolerance."""


class EvaluationError(BergmanError):
    pass


class ResourceError(BergmanError):
    pass


class EmptySpaceError(BergmanError):
    pass


class UnderflowError(BergmanError):
    pass


class ConditioningError(BergmanError):
    pass


class DiscretizationError(BergmanError, ValueError):
    pass


class BoundViolationError(BergmanError):
    pass


class WindowTooSmallError(BergmanError):
    pass


class BasePointError(BergmanError):
    pass


class SequenceNotEscapingError(BergmanError):
    pass


class PreconditionError(BergmanError, ValueError):
    pass
