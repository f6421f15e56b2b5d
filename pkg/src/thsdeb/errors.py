"""Exception hierarchy.

``InputError`` subclasses signal bad user input (CLI exit code 2),
``NumericalError`` subclasses signal numerical failures (exit code 3).
"""


class ThsdebError(Exception):
    """Base class for all package errors."""


class InputError(ThsdebError, ValueError):
    pass


class NumericalError(ThsdebError, ArithmeticError):
    pass


class NonFinite(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class EmptyInput(InputError):
    pass


class TooShort(InputError):
    pass


class PTooSmall(InputError):
    pass


class RankDeficient(NumericalError):
    pass


class FoldRankDeficient(NumericalError):
    pass


class NotPSD(NumericalError):
    pass
