"""Exception hierarchy shared by all pivegan modules."""


class PiveganError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(PiveganError, ValueError):
    pass


class CholeskyFailure(PiveganError, ArithmeticError):
    pass


class InvalidCount(PiveganError, ValueError):
    pass


class FormatError(PiveganError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NonpositiveCoefficient(PiveganError, ValueError):
    pass


class SingularSystem(PiveganError, ArithmeticError):
    pass


class SensorOffGrid(PiveganError, ValueError):
    pass


class EmptyTape(PiveganError, RuntimeError):
    pass


class NonScalarOutput(PiveganError, ValueError):
    pass


class OutOfRange(PiveganError, ValueError):
    pass


class NotBoundaryPoint(PiveganError, ValueError):
    pass


class ConfigError(PiveganError, ValueError):
    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class NonFiniteLoss(PiveganError, FloatingPointError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class LayoutModeMismatch(PiveganError, ValueError):
    pass


class EmptySample(PiveganError, ValueError):
    pass


class CoordMismatch(PiveganError, ValueError):
    pass


class DegenerateInput(PiveganError, ValueError):
    pass


class ZeroReference(PiveganError, ZeroDivisionError):
    pass


class EmptyEnsemble(PiveganError, ValueError):
    pass


class MissingArtifact(PiveganError, FileNotFoundError):
    pass
