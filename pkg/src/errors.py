"""
Exception hierarchy shared by all toolkit modules
"""
from typing import Any, Optional, Sequence


class SpectralError(Exception):
    """Base class; exit_code is what the CLI returns"""

    exit_code = 1


class ValidationError(SpectralError, ValueError):
    """Invalid input, malformed config or broken invariant of an input object"""

    exit_code = 1

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        self.field = field
        self.line = line
        self.column = column
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}" + (f", column {column}" if column is not None else ""))
        if location:
            message = f"{message} ({'; '.join(location)})"
        super().__init__(message)


class FamilyMismatchError(ValidationError):
    """Operation applied to a model of the wrong family"""


class NumericalError(SpectralError):
    """Quadrature, factorization or size-limit failure"""

    exit_code = 2


class NonConvergenceError(NumericalError):
    """An iterative procedure did not settle; carries the last values seen"""

    def __init__(self, message: str, last_values: Sequence[Any] = ()):
        self.last_values = tuple(last_values)
        if self.last_values:
            message = f"{message} (last values: {', '.join(str(v) for v in self.last_values)})"
        super().__init__(message)


class DivergenceError(NumericalError):
    """A time integral or series diverges for this family"""

    def __init__(self, message: str, family: Optional[str] = None):
        self.family = family
        if family:
            message = f"{message} [family {family}]"
        super().__init__(message)


class InvariantViolation(SpectralError):
    """A checked mathematical invariant failed: signals a bug"""

    exit_code = 3
