"""Shared exception types."""


class ParseError(ValueError):
    """Malformed expression source; carries the character offset."""

    def __init__(self, message, position):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class EvalDomainError(ArithmeticError):
    """Evaluation left a function's domain (ln of non-positive, 1/0, ...)."""


class OutsideDomainError(ValueError):
    """A point was queried outside the field's domain D."""


class NumericFailure(RuntimeError):
    """A numeric kernel hit its iteration or subdivision cap.

    ``partial`` holds the best estimate available at the point of failure
    (None when no meaningful partial result exists).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
