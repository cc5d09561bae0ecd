"""Exception types shared across the package.

The CLI maps :class:`ValidationError` to exit code 1 (domain error) and
:class:`FormatError` to exit code 2 (I/O or parse error).
"""


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class FormatError(ValueError):
    """A file could not be parsed into the documented record format."""

    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
