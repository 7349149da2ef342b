"""Exception types shared across the package."""


class FormatError(ValueError):
    """A binary stream does not follow the expected layout."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DataError(ValueError):
    """Input data are well-formed but semantically invalid."""


class NumericalError(ArithmeticError):
    """A factorization or solve failed even after regularization."""
