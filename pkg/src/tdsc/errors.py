"""Exception types raised across the package.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``DataError`` -> 3,
``NumericError`` -> 4.
"""


class TDSCError(Exception):
    pass


class ConfigError(TDSCError, ValueError):
    pass


class InvalidConfig(ConfigError):
    pass


class DataError(TDSCError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RaggedRows(ParseError):
    pass


class EmptyFile(DataError):
    pass


class DimensionMismatch(TDSCError, ValueError):
    pass


# Several modules talk about shapes rather than dimensions; same failure.
ShapeMismatch = DimensionMismatch
LengthMismatch = DimensionMismatch


class NumericError(TDSCError, ArithmeticError):
    pass


class FactorizationFailed(NumericError):
    pass


class NonFiniteEvaluation(NumericError):
    pass


class ZeroNormColumn(NumericError):
    pass


class EmptyRowOrColumn(NumericError):
    pass


class AsymmetricInput(NumericError, ValueError):
    pass


class KTooLarge(TDSCError, ValueError):
    pass


class NonFiniteLoss(NumericError):
    def __init__(self, step, params=None):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
        # last parameters that produced a finite loss
        self.params = params
