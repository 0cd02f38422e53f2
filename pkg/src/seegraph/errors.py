"""Exception hierarchy shared across the package."""


class SeeGraphError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(SeeGraphError):
    """Tensor shapes do not conform for the requested operation."""


class DomainError(SeeGraphError):
    """An operation was evaluated outside its numerical domain."""


class ContractError(SeeGraphError):
    """A caller violated an operation's precondition."""


class ConfigError(SeeGraphError):
    """Invalid or inconsistent configuration value."""


class NumericalError(SeeGraphError):
    """An iterative numerical procedure failed to converge."""


class FormatError(SeeGraphError):
    """A binary or JSON artifact does not match its expected layout."""


class ValidationError(SeeGraphError):
    """Domain data violates a structural invariant."""


class InsufficientDataError(SeeGraphError):
    """Not enough samples to carry out the requested segmentation."""


class EmptyBandError(SeeGraphError):
    """A frequency band retains no spectral bins at the given rate."""


class TrainingError(SeeGraphError):
    """Training diverged or produced non-finite values."""


class UsageError(SeeGraphError):
    """Command-line usage problem (bad flags, missing files, unsafe writes)."""
