"""Exception hierarchy shared across the package."""


class FlowupError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(FlowupError, ValueError):
    pass


class DegenerateInputError(FlowupError, ValueError):
    pass


class ConvergenceError(FlowupError, RuntimeError):
    pass


class NumericalError(FlowupError, ArithmeticError):
    """Raised when a non-finite value shows up in a computation."""


class FileFormatError(FlowupError, ValueError):
    """Malformed or unsupported file content.

    ``line`` is 1-based when the problem can be pinned to a line, else None.
    """

    def __init__(self, message, path=None, line=None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if self.path is not None:
            where += self.path
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.message = message


class ParseError(FileFormatError):
    pass


class CheckpointError(FileFormatError):
    pass
