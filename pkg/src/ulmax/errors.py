"""Exception types raised across the package."""


class UlmaxError(Exception):
    """Base class for all package errors."""


class TopologyDisconnected(UlmaxError):
    pass


class InvalidWeightMatrix(UlmaxError):
    pass


class NoConvergence(UlmaxError):
    pass


class DimensionMismatch(UlmaxError, ValueError):
    pass


class DeltaTooLarge(UlmaxError, ValueError):
    pass


class DeltaExceedsInteriorRadius(DeltaTooLarge):
    pass


class DegenerateBasis(UlmaxError, ValueError):
    pass


class IterationCapExceeded(UlmaxError):
    pass


class ThetaOutOfRange(UlmaxError, ValueError):
    pass


class FeedbackViolation(UlmaxError, AssertionError):
    """A trivial-query algorithm queried away from its played action."""


class InvariantViolation(UlmaxError, AssertionError):
    """A runtime invariant checked inline during a run did not hold."""


class AgentOutOfRange(UlmaxError, IndexError):
    pass


class NonPositiveRegret(UlmaxError, UserWarning):
    """Issued as a warning when a slope fit has to floor non-positive regrets."""


class ResolutionTooCoarse(UlmaxError, ValueError):
    pass


class ConfigInvalid(UlmaxError, ValueError):
    """Raised with a list of ``(field, message)`` diagnostics."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"{field}: {msg}" for field, msg in self.problems]
        super().__init__("invalid config:\n  " + "\n  ".join(lines))
