"""Exception hierarchy.

Every error carries a stable ``code`` string; the command line front end
prints it in its JSON diagnostics.
"""


class MmbmError(Exception):
    code = "MmbmError"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class ValidationError(MmbmError, ValueError):
    """Bad input: maps to exit status 2 on the command line."""

    code = "ValidationError"


class NumericalError(MmbmError, ArithmeticError):
    """A numerical procedure failed: exit status 3."""

    code = "NumericalError"


class NotAGenerator(ValidationError):
    code = "NotAGenerator"


class NotIrreducible(ValidationError):
    code = "NotIrreducible"


class ZeroVariance(ValidationError):
    code = "ZeroVariance"


class ZeroMeanDrift(ValidationError):
    code = "ZeroMeanDrift"


class BadBuffer(ValidationError):
    code = "BadBuffer"


class EpsTooLarge(ValidationError):
    code = "EpsTooLarge"


class OutOfRange(ValidationError):
    code = "OutOfRange"


class BadConfig(ValidationError):
    code = "BadConfig"


class NegativeRate(ValidationError):
    code = "NegativeRate"


class NotBalanced(ValidationError):
    code = "NotBalanced"


class EmptySample(ValidationError):
    code = "EmptySample"


class NonFinite(NumericalError):
    code = "NonFinite"


class NoConvergence(NumericalError):
    code = "NoConvergence"

    def __init__(self, iterations, residual):
        super().__init__(
            f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class SubspaceIllConditioned(NumericalError):
    code = "SubspaceIllConditioned"


class SingularSystem(NumericalError):
    code = "SingularSystem"


class SingularN(SingularSystem):
    code = "SingularN"


class SingularBlock(SingularSystem):
    code = "SingularBlock"
