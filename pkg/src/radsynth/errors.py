"""Exception taxonomy shared across the package.

ValueError is used for ordinary argument violations; the classes here mark
conditions the CLI maps to distinct exit codes.
"""


class ConfigError(ValueError):
    """Invalid configuration (bad flag, unreadable config file, bad bounds)."""


class DataError(RuntimeError):
    """Input data is missing, malformed, or inconsistent."""


class NumericError(RuntimeError):
    """A numeric invariant broke at runtime (non-finite loss, negative radicand)."""


class SequencingError(RuntimeError):
    """An operation arrived out of order for a session or stateful protocol."""


class ConflictError(RuntimeError):
    """A mutation collided with one already recorded (duplicate response)."""
