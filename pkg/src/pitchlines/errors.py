"""Exception types shared across the pitchlines package."""


class PitchlinesError(Exception):
    """Base class for all pitchlines errors."""


class IoError(PitchlinesError, OSError):
    """A file is missing, unreadable, or unwritable."""


class FormatError(PitchlinesError, ValueError):
    """An input file uses an unsupported or malformed encoding."""


class InvalidParam(PitchlinesError, ValueError):
    """A parameter violates its documented precondition."""


class SchemaError(PitchlinesError, ValueError):
    """A record file violates the session schema.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyChain(PitchlinesError, ValueError):
    """No chain pixel survived border clipping."""


class UnlabeledRecord(PitchlinesError, ValueError):
    """A record required to carry a human label does not have one."""


class NoPositives(PitchlinesError, ValueError):
    """A training set contains no positively labeled record."""


class InvalidSpec(PitchlinesError, ValueError):
    """A synthetic scene specification cannot be rendered."""
