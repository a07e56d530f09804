"""
mpbridge exceptions.
"""


class MpbridgeError(Exception):
    """Base exception for all mpbridge errors."""
    pass


class ValidationError(MpbridgeError):
    """Input violates a documented invariant."""
    pass


class InvalidWord(ValidationError):
    """Word is empty or carries a symbol outside the alphabet."""
    pass


class RegionViolation(ValidationError):
    """Parameters lie outside the region where the representation is valid."""
    pass


class SupportViolation(ValidationError):
    """A step law charges a point outside the reference support."""
    pass


class NotStationaryInput(ValidationError):
    """Supplied measure is not stationary for the chain it was paired with."""
    pass


class SizeLimit(ValidationError):
    """Requested exact computation exceeds the supported size."""
    pass


class NumericalError(MpbridgeError):
    """A numerical routine failed to produce a trustworthy result."""
    pass


class NotPrimitive(NumericalError):
    """Matrix is reducible or periodic."""
    pass


class NoConvergence(NumericalError):
    """Iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class InconsistentEigendata(NumericalError):
    """Perron data does not match the matrix it is applied to."""
    pass


class DegenerateLaw(NumericalError):
    """Bridge normalization vanishes."""
    pass


class TruncationFailure(NumericalError):
    """Adaptive truncation did not stabilize."""
    pass


class Infeasible(NumericalError):
    """Constraint set of a variational problem is empty."""
    pass


class NumericUnderflow(NumericalError):
    """Weight left the floating-point range; the log-weight is attached."""

    def __init__(self, message: str, log_weight: float):
        super().__init__(message)
        self.log_weight = log_weight


class BoundViolation(MpbridgeError):
    """Pointwise sandwich bound fails; the offending outcome is attached."""

    def __init__(self, message: str, witness: object):
        super().__init__(message)
        self.witness = witness


class EmptyEvent(MpbridgeError):
    """No outcome falls inside the requested event."""
    pass


class PhaseAmbiguous(UserWarning):
    """Parameters sit on a phase boundary of the density diagram."""
    pass


class BoundaryOptimum(UserWarning):
    """Optimizer stopped on the boundary of its box."""
    pass
