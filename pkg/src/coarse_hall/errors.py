"""Exception types shared across the package.

The CLI maps these onto exit codes: argument/usage problems exit 2,
numerical failures exit 3.
"""


class CoarseHallError(Exception):
    """Base class for all package errors."""


class ArgumentError(CoarseHallError, ValueError):
    """Invalid argument (negative radius, mismatched clouds, ...)."""


class CapacityError(ArgumentError):
    """Requested problem exceeds the configured site-count cap."""


class EmptyCloudError(ArgumentError):
    pass


class ContractError(CoarseHallError):
    """A numerical precondition (e.g. idempotency) or cross-check failed."""


class NumericalError(CoarseHallError):
    """Eigensolver, exponential or determinant failure."""


class GapError(NumericalError):
    """Fermi energy not in a spectral gap, or a gap closed."""


class UsageError(CoarseHallError):
    """Bad CLI input: missing file, schema violation."""
