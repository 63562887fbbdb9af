"""Exception hierarchy.

Validation failures map to CLI exit code 2, numerical failures to exit code 3.
"""


class BergmanLabError(Exception):
    exit_code = 1


class ValidationError(BergmanLabError, ValueError):
    exit_code = 2


class NotBig(ValidationError):
    """The class c1(L) - sum tau_j [a_j] has no positive mass (sum tau_j >= k)."""

    def __init__(self, k, tau_sum):
        self.k = k
        self.tau_sum = tau_sum
        super().__init__(
            f"triplet is not big: sum of tau = {tau_sum:.12g} >= k = {k}; "
            "bigness on the sphere requires sum(tau_j) < k"
        )


class DimensionZero(ValidationError):
    """The constrained section space is {0}."""


class NumericalError(BergmanLabError, ArithmeticError):
    exit_code = 3


class IllConditioned(NumericalError):
    """Weighted evaluation matrix is numerically rank deficient."""


class MaxIterations(NumericalError):
    """Envelope solver hit its sweep budget; carries the best iterate."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class RootFindingFailed(NumericalError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals
