"""Exception hierarchy shared by the library and the CLI."""


class SymorientError(Exception):
    """Base class for all errors raised by symorient."""


class InvalidInputError(SymorientError, ValueError):
    """An argument violates a documented precondition."""


class ParseError(SymorientError, ValueError):
    """A file could not be parsed.

    Attributes
    ----------
    lineno : int or None
        1-based line number of the offending record, when known.
    """

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class StructuralError(SymorientError, ValueError):
    """A parsed file is syntactically fine but internally inconsistent."""


class NumericError(SymorientError, FloatingPointError):
    """Non-finite values appeared inside a model evaluation."""

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)
        self.layer = layer


class TrainingError(SymorientError, RuntimeError):
    """Training diverged."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class ConfigError(SymorientError, ValueError):
    """Bad configuration, or an artifact produced under a different setup."""
