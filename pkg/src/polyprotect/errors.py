"""Exception hierarchy.

`UsageError` subclasses map to CLI exit code 2, everything else to 1.
"""


class PolyProtectError(Exception):
    pass


class UsageError(PolyProtectError):
    """Bad configuration or inputs that violate a documented precondition."""


class ConfigError(UsageError):
    pass


class DomainError(UsageError):
    pass


class ProtocolError(UsageError):
    pass


class ParseError(UsageError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(PolyProtectError):
    pass


class ComparisonError(PolyProtectError):
    pass


class CalibrationError(PolyProtectError):
    pass


class EstimationError(PolyProtectError):
    pass


class ExhaustionError(PolyProtectError):
    pass


class SolverInputError(UsageError):
    pass
