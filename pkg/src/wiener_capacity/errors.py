"""Exception hierarchy shared by all modules.

Everything raised on purpose derives from :class:`CapacityError`, so the CLI
can map module failures to exit code 1 and configuration problems
(:class:`InvalidConfig`) to exit code 2.
"""


class CapacityError(Exception):
    """Base class for all library errors."""


class InvalidInput(CapacityError, ValueError):
    pass


class DomainError(CapacityError, ValueError):
    """Argument outside the domain where a formula is defined."""


class NoBracket(CapacityError):
    """Root bracket could not be established, or the target function is
    not monotone over the bracket."""


class NoConvergence(CapacityError):
    pass


class InsufficientPrecision(CapacityError):
    """Monte-Carlo standard error above the requested threshold."""


class DegenerateSample(CapacityError):
    pass


class NumericalFailure(CapacityError):
    pass


class EnvelopeError(CapacityError):
    """Rejection-sampling envelope violated. Indicates a bug, not bad input."""


class WeightCollapse(CapacityError):
    """Every particle weight underflowed during a filter step."""


class NoCrossover(CapacityError):
    pass


class InvalidConfig(CapacityError):
    pass


class InefficientProposal(RuntimeWarning):
    """Rejection sampler acceptance rate below 1e-4."""
