"""Exception types shared across the package."""


class SingExError(Exception):
    """Base class for all errors raised by this package."""


class ArgumentError(SingExError, ValueError):
    """Invalid argument to a public operation."""


class GeometryError(SingExError):
    """Degenerate surface data: vanishing Jacobian or non-definite metric."""


class SingularEvaluationError(SingExError):
    """Evaluation requested exactly at a singular point."""


class DivergentIntegralError(SingExError):
    """The requested definite integral does not converge."""


class DivisionGuardError(SingExError):
    """Division regularization with a denominator that may vanish."""


class FitError(SingExError):
    """Least-squares fit of the regular factor failed."""


class PatchParseError(SingExError, ValueError):
    """Patch file violates the schema."""


class OracleError(SingExError):
    """Adaptive reference quadrature did not reach the requested tolerance.

    Carries the best available estimate in ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
