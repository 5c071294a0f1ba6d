"""Exception and warning classes.

Input problems derive from :class:`InputError` (also a ``ValueError``);
failures of the numerical machinery derive from :class:`NumericalError`.
The CLI maps the first group to exit code 2 and the second to exit code 3.
"""


class ClmdaError(Exception):
    """Base class for all package errors."""


class InputError(ClmdaError, ValueError):
    """Bad user input: files, shapes, codes, configuration."""


class ParseError(InputError):
    def __init__(self, row, col, value):
        self.row, self.col, self.value = row, col, value
        super().__init__(f"non-integer cell {value!r} at row {row}, column {col}")


class DomainError(InputError):
    pass


class EmptyInput(InputError):
    pass


class ValidationError(InputError):
    pass


class DegenerateColumn(InputError):
    pass


class DimensionError(InputError):
    pass


class SingularDesign(InputError):
    pass


class EmptyDesign(InputError):
    pass


class CholeskyError(InputError):
    pass


class NumericalError(ClmdaError, ArithmeticError):
    """The numerical machinery produced an unusable state."""


class DegenerateWeights(NumericalError):
    pass


class DegenerateFit(NumericalError):
    pass


class FitFailure(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class SeparationWarning(RuntimeWarning):
    """Thresholds diverged and were capped."""


class SparseCategoryWarning(UserWarning):
    pass


class IoError(ClmdaError, OSError):
    """An output file could not be written."""


class GeometryWarning(UserWarning):
    """A biplot element was omitted (for example a zero-length axis)."""
