"""Exception types shared across the package.

Argument-level mistakes (wrong shapes, invalid parameters) raise plain
``ValueError``; the classes below mark conditions a caller may want to
handle separately, and the CLI maps each one to a distinct exit code.
"""


class TtkmError(Exception):
    """Base class for package-specific errors."""


class CapacityError(TtkmError):
    """A requested computation exceeds a documented size cap."""


class ConvergenceError(TtkmError):
    """An iterative solver failed to reach its stopping criterion."""


class DataFormatError(TtkmError):
    """A file or byte stream does not match its documented format."""


class ConfigError(TtkmError):
    """A run-configuration file is missing, malformed, or inconsistent."""
