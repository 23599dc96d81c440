"""Exception hierarchy shared by every rsvdlab module."""


class RsvdError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(RsvdError, ValueError):
    pass


class NonFiniteResult(RsvdError, ArithmeticError):
    pass


class DegenerateColumn(RsvdError, ArithmeticError):
    """A Householder column vanished; only raised in strict mode."""


class NoConvergence(RsvdError, ArithmeticError):
    def __init__(self, message: str, sweeps: int):
        super().__init__(message)
        self.sweeps = sweeps


class RankTooLarge(RsvdError, ValueError):
    pass


class SingularGram(RsvdError, ArithmeticError):
    pass


class ConfigError(RsvdError, ValueError):
    pass


class TheoremModeViolation(ConfigError):
    pass


class CheckpointMismatch(RsvdError):
    pass


class MatrixParseError(RsvdError, ValueError):
    pass
