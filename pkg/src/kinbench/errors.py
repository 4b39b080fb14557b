"""Exception types shared across the package."""


class KinbenchError(Exception):
    """Base class for all package errors."""


class DomainError(KinbenchError):
    """Point lies outside the declared domain."""


class InsufficientSmoothness(KinbenchError):
    """Derivative data missing and finite differencing is not possible."""


class MissingGibbsForm(KinbenchError):
    """Operation needs (beta, H) data and none can be recovered."""


class UnknownExample(KinbenchError):
    """Catalog name not recognized."""


class ParameterOutOfRange(KinbenchError):
    """Parameter outside the admissible range."""


class ShapeError(KinbenchError):
    """Matrix or vector has the wrong shape."""


class NoViolationAtPoint(KinbenchError):
    """Leading coefficient vanishes here; no counterexample at this point."""


class OrderTooLow(KinbenchError):
    """Operator order is <= 2; nothing to violate."""


class PreconditionViolated(KinbenchError):
    """Caller-supplied data breaks a stated precondition."""


class NonEllipticCoefficient(KinbenchError):
    """Diffusion coefficient has a negative eigenvalue."""


class UnsupportedTensor(KinbenchError):
    """Off-diagonal diffusion tensors are not supported in v1."""


class TimeError(KinbenchError):
    """Negative evolution time."""


class TruncationBudgetExceeded(KinbenchError):
    """Series length cap exceeded; split the horizon into shorter steps."""


class SpectrumError(KinbenchError):
    """Resolvent parameter outside the guaranteed resolvent set."""


class NoInvariantDensity(KinbenchError):
    """Chain has transient states; no strictly positive invariant density."""


class SupportViolation(KinbenchError):
    """State puts mass where the reference density vanishes."""


class NonSmoothH(KinbenchError):
    """Convex functional lacks the second derivative needed here."""


class EmptyEnsemble(KinbenchError):
    """No live particles to histogram."""


class ExpressionError(KinbenchError):
    """Coefficient expression failed to parse."""


class ScenarioError(KinbenchError):
    """Scenario document is malformed (maps to CLI exit code 2)."""


class MomentBiasWarning(UserWarning):
    """Moment-recovery window too long; O(t) bias may be visible."""
