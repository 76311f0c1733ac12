"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented exit codes: 1 usage/configuration, 2 data, 3 numerical.
"""


class KansegError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(KansegError):
    """Invalid configuration or incompatible shapes between stages."""

    exit_code = 1


class InputError(KansegError):
    """An operation received inputs that violate its contract."""

    exit_code = 1


class DataError(KansegError):
    """Dataset ingestion or file I/O problem."""

    exit_code = 2


class NumericalError(KansegError):
    """Non-finite values encountered where finite ones are required."""

    exit_code = 3


class CheckpointError(DataError):
    """Base class for checkpoint file problems."""


class CheckpointVersionError(CheckpointError):
    """Magic bytes or format version do not match."""


class CheckpointTruncatedError(CheckpointError):
    """File ended before the declared payload was read."""


class CheckpointShapeError(CheckpointError):
    """A stored tensor does not fit the model built from the config."""
