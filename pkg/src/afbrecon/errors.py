"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes of interacting arrays are inconsistent."""


class ParameterError(ValueError):
    """A scalar argument lies outside its documented range."""


class FormatError(ValueError):
    """A container file is malformed; the message names the offending field."""


class NumericalFailure(RuntimeError):
    """The solver hit a non-finite objective or could not find a descent step.

    Carries the partial iteration trace accumulated before the failure so
    callers can still inspect (and persist) what happened.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
