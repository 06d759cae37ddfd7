"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage problems exit 1,
data problems exit 2, numeric failures exit 3.
"""


class FuelwatchError(Exception):
    """Base class for all package-specific errors."""


class UsageError(FuelwatchError):
    """Bad arguments or configuration values."""


class DataError(FuelwatchError):
    """Missing files, malformed input, or data that violates a contract."""


class NumericError(FuelwatchError):
    """Numeric failure during training or scoring (NaN/inf loss)."""
