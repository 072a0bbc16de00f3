"""Exception hierarchy.

Two families map onto CLI exit codes: :class:`ValidationError` (bad input,
exit 2) and :class:`NumericalError` (the numbers went wrong, exit 3).
"""


class QHystError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(QHystError, ValueError):
    pass


class NumericalError(QHystError, ArithmeticError):
    pass


class InvalidLatticeError(ValidationError):
    pass


class GaugeInfeasibleError(ValidationError):
    pass


class OutOfRangeError(ValidationError):
    pass


class ScheduleError(ValidationError):
    pass


class CapacityError(ValidationError):
    pass


class ContractViolation(ValidationError):
    pass


class ConfigError(ValidationError):
    """Configuration problem; ``key_path`` names the offending entry."""

    def __init__(self, key_path, message):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class IncompleteLoopError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class RankError(ValidationError):
    pass


class AdiabaticLimitError(ValidationError):
    pass


class StabilityError(NumericalError):
    def __init__(self, message, ratio=None):
        self.ratio = ratio
        super().__init__(message)


class InconclusiveScanError(NumericalError):
    pass


class NonConvergedError(NumericalError):
    pass


class UpdateCollapseError(NumericalError):
    pass


class SingularityError(NumericalError):
    pass
