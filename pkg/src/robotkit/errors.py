"""Exception hierarchy shared across the toolkit."""


class RobotKitError(Exception):
    """Base class for all domain errors raised by robotkit."""


class ShapeError(RobotKitError, ValueError):
    """Input or parameter dimensions do not chain."""


class ConfigError(RobotKitError, ValueError):
    """A configuration value is out of its legal range."""


class StateError(RobotKitError, RuntimeError):
    """An object is not in the state an operation requires (e.g. unscored suite)."""


class ArgumentError(RobotKitError, ValueError):
    """A call-level precondition was violated."""


class ParseError(RobotKitError, ValueError):
    """Base class for file-format parse failures."""


class MagicError(ParseError):
    """File does not start with the expected magic number."""


class TruncatedError(ParseError):
    """File ends before the payload its header announces."""

    def __init__(self, path, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{path}: truncated payload, expected {expected} bytes, got {actual}")


class CountMismatchError(ParseError):
    """Image and label files disagree on the number of items."""


class CellError(ParseError):
    """A CSV cell is not numeric."""


class LabelRangeError(ParseError):
    """A label is outside [0, num_classes)."""


class InvariantError(ParseError):
    """Decoded records violate a format invariant (range or ball bound)."""
