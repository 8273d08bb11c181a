"""Exception types shared across the lab."""


class AbsdeLabError(Exception):
    """Base class for all errors raised by this package."""


class NonGridAnticipation(AbsdeLabError):
    """A delayed time s + delta(s) falls strictly between grid points."""


class HorizonViolation(AbsdeLabError):
    """A delayed time s + delta(s) exceeds the data horizon T + K."""


class JointTransformDelayMismatch(AbsdeLabError):
    """A joint anticipated-Z transform requires delta and zeta to coincide."""


class NonFiniteGenerator(AbsdeLabError):
    """A generator evaluation returned a non-finite value."""


class NonFiniteTarget(AbsdeLabError):
    """Regression targets contain NaN or infinity."""


class DomainEscape(AbsdeLabError):
    """Evaluation outside the truncated spatial domain with extrapolation off."""


class MisalignedDelay(AbsdeLabError):
    """A lag or horizon is not an integer multiple of the grid step."""


class EnsembleSpanMismatch(AbsdeLabError):
    """A path ensemble does not cover the requested simulation window."""


class StabilityGuard(AbsdeLabError):
    """Explicit-scheme stability requirement dt * C < 1 is violated."""


class NegativeB(AbsdeLabError):
    """The controlled drift coefficient b must map into the nonnegative reals."""


class MonotonicityPreconditionFailed(AbsdeLabError):
    """Monotone-iteration hypotheses (ordering / monotone generator) not met."""


class DelayOrderViolated(AbsdeLabError):
    """Delay-sensitivity comparison requires delta1 <= delta2 pointwise."""


class HypothesisConstructionFailed(AbsdeLabError):
    """A randomized comparison instance failed its own hypothesis check."""


class ConfigError(AbsdeLabError):
    """A problem config file or CLI argument is malformed."""
