"""Exception hierarchy shared by every mvprof module."""


class MvprofError(Exception):
    """Base class for all library errors."""


class DimensionError(MvprofError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(MvprofError, ArithmeticError):
    """A non-finite value appeared where finite values are required."""


class ContractError(MvprofError, ValueError):
    """A precondition of an operation was violated."""


class ConfigError(MvprofError, ValueError):
    """A configuration object violates its invariants."""


class InputError(MvprofError, ValueError):
    """An input value is out of its admissible range."""


class LengthError(MvprofError, ValueError):
    """A sequence exceeds the maximum supported length."""


class FormatError(MvprofError, ValueError):
    """A serialized artifact is malformed."""


class ParseError(MvprofError, ValueError):
    """Generated text does not follow the response grammar."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason
