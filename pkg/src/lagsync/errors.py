"""Exception hierarchy shared by every lagsync module."""


class LagsyncError(Exception):
    """Base class for all library errors."""


class ValidationError(LagsyncError, ValueError):
    """A value or configuration key violates its constraint."""

    def __init__(self, message, key=None):
        self.key = key
        self.message = message
        super().__init__(f"{key}: {message}" if key else message)


class ParseError(LagsyncError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class NonPositiveExponent(ValidationError):
    pass


class InvalidExponents(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NotRootReachable(LagsyncError):
    """Some follower cannot be reached from the leader (node 0)."""


class NoCandidateFound(LagsyncError):
    """The diagonal-scaling search stalled without a positive definite candidate."""


class IsolatedAgent(LagsyncError):
    pass


class SingularInertia(LagsyncError):
    pass


class BoundViolated(LagsyncError):
    """A sampled plant violates a claimed bound; ``witness`` holds the sample."""

    def __init__(self, message, witness=None, certificate=None):
        self.witness = witness
        self.certificate = certificate
        super().__init__(message)


class GainConditionViolated(LagsyncError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class UncertifiedGains(LagsyncError):
    pass


class NonFiniteState(LagsyncError):
    pass


class Divergence(LagsyncError):
    pass


class AssumptionViolated(LagsyncError):
    pass
