"""Exception hierarchy shared by the library and the command-line front end."""


class NlosFimError(Exception):
    """Base class for all errors raised by :mod:`nlosfim`."""


class GeometryError(NlosFimError, ValueError):
    """Two nodes coincide (or nearly so), so the path geometry is undefined.

    Attributes
    ----------
    node : str
        Name of the offending node, e.g. ``"s_2"`` or ``"p"``.
    """

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class DegenerateError(NlosFimError, ArithmeticError):
    """A matrix that must be inverted is singular to working precision."""


class ScenarioFileError(NlosFimError, ValueError):
    """A scenario file could not be parsed or failed schema validation."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
