"""Exception hierarchy shared by the library and the command line."""


class SlextError(Exception):
    """Base class. `code` is the machine-readable name, `exit_code` what the CLI returns."""

    exit_code = 2

    def __init__(self, message="", **details):
        super().__init__(message)
        self.message = message
        self.details = details

    @property
    def code(self):
        return type(self).__name__

    def one_line(self):
        text = " ".join(str(self.message).split())
        return f"ERROR {self.code}: {text}"


class InputError(SlextError):
    exit_code = 1


class NumericalError(SlextError):
    exit_code = 2


# input problems
class ConfigError(InputError):
    pass


class ProblemFileError(InputError):
    pass


class InvalidInterval(InputError):
    pass


class SpecParseError(InputError):
    pass


class WronskianNotNormalized(InputError):
    pass


class NonPositiveCoefficient(InputError):
    pass


class GammaOutOfRange(InputError):
    pass


class RangeMismatch(InputError):
    pass


class DetNotOne(InputError):
    pass


class NonnegativityViolated(InputError):
    pass


class ComplexCWithNonrealBoundary(InputError):
    pass


class NotNonnegative(InputError):
    pass


class NotReflectionInvariant(InputError):
    pass


class NotSymmetric(InputError):
    pass


class UnsupportedCoupling(InputError):
    pass


# numerical failures
class StepUnderflow(NumericalError):
    pass


class QuadratureNoConvergence(NumericalError):
    pass


class VanishingPrincipal(NumericalError):
    pass


class ExtrapolationDivergence(NumericalError):
    pass


class ZeroFriedrichsEigenvalue(NumericalError):
    pass


class DenominatorZero(NumericalError):
    pass


class ScanTooCoarse(NumericalError):
    pass


class ScanExhausted(NumericalError):
    pass


class MidpointValueZero(NumericalError):
    pass


class BracketFailure(NumericalError):
    pass


class InequalityViolated(NumericalError):
    pass


class PathDisagreement(NumericalError):
    pass
