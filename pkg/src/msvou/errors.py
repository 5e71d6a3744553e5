"""Exception hierarchy shared by all modules."""


class MSVOUError(Exception):
    """Base class for every error raised by the package."""


class NumericError(MSVOUError, ArithmeticError):
    pass


class ShapeError(MSVOUError, ValueError):
    pass


class SingularOperatorError(MSVOUError, ArithmeticError):
    """The Sylvester operator X -> AX + XA^T is not invertible."""


class NotPSDError(MSVOUError, ValueError):
    pass


class OutOfStripError(MSVOUError, ValueError):
    """Argument lies outside the region where a transform is finite."""


class BranchError(MSVOUError, ArithmeticError):
    """A complex power/log hit its branch cut where continuity is required."""


class UnsupportedSamplingError(MSVOUError, ValueError):
    pass


class QuadratureError(MSVOUError, ArithmeticError):
    pass


class MartingaleInfeasibleError(MSVOUError, ValueError):
    pass


class WrongBranchError(MSVOUError, ValueError):
    """Closed form requested for parameters it does not cover (a1 != a2)."""


class DegenerateCoefficientError(MSVOUError, ArithmeticError):
    pass


class DomainError(MSVOUError, ValueError):
    pass


class DampingError(MSVOUError, ValueError):
    pass


class ArbitrageError(MSVOUError, ValueError):
    """Price lies outside the static no-arbitrage band."""


class CalibrationFailure(MSVOUError, RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class ConfigError(MSVOUError, ValueError):
    """Malformed parameter/config/quote file."""
