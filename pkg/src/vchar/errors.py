"""Exception types shared across the package.

Input/validation problems derive from :class:`InputError` (CLI exit code 2);
numeric blow-ups raise :class:`NumericError` (exit code 3).
"""


class InputError(ValueError):
    """Base class for malformed inputs, shapes, labels and configs."""


class DimensionError(InputError):
    pass


class WindowError(InputError):
    pass


class LengthError(InputError):
    pass


class DomainError(InputError):
    pass


class LabelError(InputError):
    pass


class ConfigError(InputError):
    pass


class FormatError(InputError):
    pass


class ParseError(FormatError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class OrderError(FormatError):
    pass


class VocabularyError(InputError):
    pass


class DegenerateTargetError(InputError):
    pass


class SchemaError(InputError):
    pass


class TemplateError(InputError):
    pass


class NumericError(ArithmeticError):
    """A value, loss or gradient stopped being finite."""
