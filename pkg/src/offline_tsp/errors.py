"""Exception types shared across the package.

The CLI maps these onto exit codes, so keep the hierarchy flat.
"""


class InvalidArgumentError(ValueError):
    pass


class InvalidRouteError(ValueError):
    pass


class DegenerateSampleError(ValueError):
    pass


class ValidationError(ValueError):
    """Malformed or inconsistent data read from a file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalFailure(ArithmeticError):
    pass


class ConfigurationError(RuntimeError):
    pass
