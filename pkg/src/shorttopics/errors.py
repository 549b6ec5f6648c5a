"""Exception hierarchy.

Three roots map onto the CLI exit codes: :class:`ValidationError` (2),
:class:`DataError` (3) and :class:`NumericalError` (4).
"""


class ShortTopicsError(Exception):
    exit_code = 1


class ValidationError(ShortTopicsError, ValueError):
    exit_code = 2


class DataError(ShortTopicsError):
    exit_code = 3


class NumericalError(ShortTopicsError, ArithmeticError):
    exit_code = 4


class DomainError(ValidationError):
    """Argument outside the mathematical domain of a function."""


class ShapeMismatch(ValidationError):
    pass


class InvalidProbability(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class TooFewDocuments(ValidationError):
    pass


class EmptyVocabulary(DataError):
    pass


class EmptyDocument(DataError):
    pass


class VocabularyMismatch(DataError):
    pass


class InsufficientOverlap(DataError):
    pass


class DegenerateBatch(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class NumericalUnderflow(NumericalError):
    pass
