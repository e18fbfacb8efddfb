"""Exception types shared across the package."""


class AclsegError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(AclsegError, ValueError):
    """Tensor shapes violate an operation's contract."""


class ContractError(AclsegError, RuntimeError):
    """An operation was called outside its contract (e.g. backward on a non-scalar)."""


class ConfigError(AclsegError, ValueError):
    """Invalid configuration value (sizes, schedules, hyperparameters)."""


class CorruptionError(AclsegError, RuntimeError):
    """A dataset file is truncated, has a bad magic/checksum, or otherwise unreadable."""


class UnsupportedVersionError(AclsegError, RuntimeError):
    """A persisted file declares a format version this build does not understand."""


class DegenerateIdealError(AclsegError, ValueError):
    """A retention metric denominator (ideal Dice) is zero."""


class TrainingAbortError(AclsegError, RuntimeError):
    """Training produced a non-finite loss; the message names the offending term."""
