"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4. Everything else is a plain bug and propagates.
"""


class EdgefaultError(Exception):
    """Base class for all package errors."""


class ShapeError(EdgefaultError):
    """Operands or buffers with incompatible dimensions."""


class NumericError(EdgefaultError):
    """A computation produced NaN/Inf or was fed non-finite values."""


class ValidationError(EdgefaultError):
    """Input data violates a documented precondition (bad index, empty split...)."""


class PolicyError(EdgefaultError):
    """A state mutation was refused (e.g. removing the last expert)."""


class ConfigError(EdgefaultError):
    """Unusable configuration or command-line arguments."""


class DataError(EdgefaultError):
    """Unreadable dataset/checkpoint file or schema mismatch."""
