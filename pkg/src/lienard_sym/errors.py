"""Exception types shared across the package."""


class LienardSymError(Exception):
    """Base class for all package-specific failures."""


class ParseError(LienardSymError):
    """Malformed expression text.

    ``position`` is the character index in the input at which the problem
    was detected.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.message = message
        self.position = position


class DomainError(LienardSymError):
    """A partial result of evaluation is undefined or non-finite."""


class NoIntervalError(LienardSymError):
    """The leading coefficient has no sampled subinterval bounded away from 0."""


class QuadratureError(LienardSymError):
    """Adaptive quadrature exceeded its refinement depth."""


class NoConstantA(LienardSymError):
    """No integration offset makes the derived coefficient ratio a constant."""


class AmbiguousOffset(LienardSymError):
    """More than one integration offset passes every check.

    This should be impossible for a genuinely integrable problem; it is
    surfaced explicitly instead of picking one offset silently.
    """

    def __init__(self, offsets):
        self.offsets = sorted(float(c) for c in offsets)
        super().__init__(
            "more than one integration offset passes all checks: "
            + ", ".join(f"{c:.12g}" for c in self.offsets)
        )


class NMustBeAtLeast4(LienardSymError):
    """Classification requires leading power n >= 4."""


class SpecError(LienardSymError):
    """Invalid synthesis specification."""


class BlowUp(LienardSymError):
    """A trajectory exceeded the configured magnitude bound."""


class NonMonotoneImage(LienardSymError):
    """A flow image folds in time and cannot be re-sampled as a graph."""
