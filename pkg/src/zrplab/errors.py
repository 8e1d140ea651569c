"""Exception hierarchy shared by all zrplab modules."""


class ZRPError(Exception):
    """Base class for all zrplab errors."""


class RateFunctionError(ZRPError, ValueError):
    """A rate table violates one of the constraints on g."""

    def __init__(self, message, k):
        super().__init__(message)
        self.k = k


class NonZeroAtOrigin(RateFunctionError):
    pass


class NonPositiveRate(RateFunctionError):
    pass


class NotMonotone(RateFunctionError):
    pass


class LipschitzViolated(RateFunctionError):
    pass


class RateTableOverflow(ZRPError):
    """An occupancy exceeded the tabulated range of a user-supplied rate."""


class EmptySystem(ZRPError):
    """Total jump rate is zero, no event can be drawn."""


class InconsistentEvent(ZRPError, ValueError):
    pass


class DivergentPartitionFunction(ZRPError, ValueError):
    pass


class TruncationTooSmall(ZRPError, ValueError):
    pass


class DensityUnreachable(ZRPError, ValueError):
    pass


class NoConvergence(ZRPError, RuntimeError):
    pass


class NonLatticeIncrement(ZRPError, ValueError):
    pass


class MaxAttemptsExceeded(ZRPError, RuntimeError):
    """Rejection budget exhausted; says nothing about correctness."""

    def __init__(self, message, attempts):
        super().__init__(message)
        self.attempts = attempts


class ZeroAcceptances(ZRPError, RuntimeError):
    """No acceptance in the sample; only a one-sided entropy bound is known."""

    def __init__(self, message, samples, lower_bound):
        super().__init__(message)
        self.samples = samples
        self.lower_bound = lower_bound


class EmptyTube(ZRPError, ValueError):
    """The tube event has probability zero under the product measure."""


class AllEmpty(ZRPError):
    pass


class SandwichViolated(ZRPError):
    def __init__(self, message, event_index, site, slack):
        super().__init__(message)
        self.event_index = event_index
        self.site = site
        self.slack = slack


class StabilityViolated(ZRPError, ValueError):
    pass


class NonpositiveField(ZRPError, ValueError):
    pass


class ConfigError(ZRPError, ValueError):
    pass
