"""Exception hierarchy.

Every error raised by the package derives from :class:`WassDRLError`. The
three intermediate classes group errors by how a caller (typically the CLI)
should react: bad input, numerical failure, or a configuration the toolkit
deliberately does not support.
"""

__all__ = [
    "WassDRLError",
    "InputError",
    "SolverError",
    "UnsupportedError",
    "ParseError",
    "LabelError",
    "DimensionMismatch",
    "NotPWL",
    "NoSlaterPoint",
    "InfeasibleSupport",
    "RadiusViolation",
    "GammaOutOfRange",
    "InsufficientData",
    "NotSymmetric",
    "IndefiniteBeyondTolerance",
    "MaxIterations",
    "DivergenceDetected",
    "SolverDefect",
    "BoundedSupportUnsupported",
    "UnsupportedNorm",
    "UnsupportedDimension",
    "KappaInfinite",
    "SampleSizeTooSmall",
]


class WassDRLError(Exception):
    """Base class for all package errors."""


class InputError(WassDRLError, ValueError):
    """Invalid data or arguments supplied by the caller."""


class SolverError(WassDRLError, RuntimeError):
    """A numerical routine failed to produce a trustworthy answer."""


class UnsupportedError(WassDRLError, NotImplementedError):
    """A well-formed request outside the supported configurations."""


# input errors
class ParseError(InputError):
    pass


class LabelError(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NotPWL(InputError):
    """The loss has no piecewise-linear representation."""


class NoSlaterPoint(InputError):
    """The support polytope has no strictly feasible point."""


class InfeasibleSupport(NoSlaterPoint):
    """The support polytope is empty."""


class RadiusViolation(InputError):
    """An input lies outside the radius declared for a polynomial kernel."""


class GammaOutOfRange(InputError):
    pass


class InsufficientData(InputError):
    pass


class NotSymmetric(InputError):
    pass


class IndefiniteBeyondTolerance(InputError):
    pass


class SampleSizeTooSmall(InputError):
    """The sample size is below the threshold of the improved radius.

    Attributes
    ----------
    required : int
        Smallest admissible sample size.
    """

    def __init__(self, message, required):
        super().__init__(message)
        self.required = required


# solver errors
class MaxIterations(SolverError):
    pass


class DivergenceDetected(SolverError):
    pass


class SolverDefect(SolverError):
    """A solver returned a point violating a structural guarantee."""


# unsupported configurations
class BoundedSupportUnsupported(UnsupportedError):
    pass


class UnsupportedNorm(UnsupportedError):
    pass


class UnsupportedDimension(UnsupportedError):
    pass


class KappaInfinite(UnsupportedError):
    pass
