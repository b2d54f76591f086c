"""Exception types shared across the package."""


class DagcError(Exception):
    """Base class for all package errors."""


class ShapeError(DagcError, ValueError):
    pass


class ContractError(DagcError, ValueError):
    """An input violates a documented precondition."""


class DegenerateInputError(DagcError, ValueError):
    pass


class ParameterError(DagcError, ValueError):
    pass


class ParseError(DagcError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DivergenceError(DagcError, FloatingPointError):
    """Raised when training produces a non-finite loss or gradient."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration
