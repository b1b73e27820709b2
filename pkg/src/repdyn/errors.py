"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`RepDynError`. Input-validation errors additionally derive from
:class:`ValueError` so callers that only care about "bad input" can catch
that.
"""


class RepDynError(Exception):
    pass


class ValidationError(RepDynError, ValueError):
    pass


class NonStochastic(ValidationError):
    pass


class NegativeEntry(ValidationError):
    pass


class BadDiscount(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class GammaMismatch(ValidationError):
    pass


class NumericalFailure(RepDynError):
    pass


class SolveFailure(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    pass


class DegenerateSpectrum(RepDynError):
    """Generated instance has a zero eigenvalue or a too-small eigen-gap."""


class GenerationFailure(RepDynError):
    pass


class NotDiagonalizable(RepDynError):
    pass


class MinimalityViolation(RepDynError):
    pass


class DegenerateGap(RepDynError):
    """Top-k set is ambiguous because of (near) tied eigen/singular values."""


class Collapse(RepDynError):
    """Gram matrix of the (observed) encoder is numerically singular."""


class SingularF(RepDynError):
    pass


class TDUnstable(RepDynError):
    """TD iteration matrix has an eigenvalue with non-positive real part."""


class StepRejected(RepDynError):
    pass


class NotStationary(RepDynError):
    pass


class NotApplicable(RepDynError):
    """A verifier hypothesis is not met by the supplied instance."""
