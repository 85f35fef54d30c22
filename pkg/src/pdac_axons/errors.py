"""Exception hierarchy shared by every module of the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by pdac_axons."""


class InvalidArgument(ToolkitError, ValueError):
    pass


class InvalidState(ToolkitError, ValueError):
    """A state violates its invariants.

    Attributes:
        component: name of the offending state component.
        value: the offending value.
    """

    def __init__(self, message, component=None, value=None):
        super().__init__(message)
        self.component = component
        self.value = value


class HypothesisViolation(ToolkitError):
    """Parameters do not satisfy the H1-H3 hypotheses an analysis relies on."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SolverError(ToolkitError):
    """Numerical failure during integration."""

    def __init__(self, message, time=None, component=None):
        super().__init__(message)
        self.time = time
        self.component = component


class StiffnessError(SolverError):
    pass


class InvariantViolation(SolverError):
    pass


class RangeError(ToolkitError, ValueError):
    pass


class DegenerateState(ToolkitError, ValueError):
    pass


class WeightUndefined(ToolkitError, ValueError):
    pass


class EvaluationError(ToolkitError):
    """The objective returned a non-finite value."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ProfileInvalid(ToolkitError):
    pass


class UndefinedIndices(ToolkitError, ValueError):
    pass


class ConfigError(ToolkitError):
    """Configuration could not be parsed or validated.

    Attributes:
        key_path: dotted path of the offending key, when known.
    """

    def __init__(self, message, key_path=None):
        super().__init__(message)
        self.key_path = key_path
