"""Exception hierarchy. Each CLI-facing class carries its process exit code."""


class AvfusionError(Exception):
    exit_code = 1


class ShapeError(AvfusionError, ValueError):
    exit_code = 3


class ConfigError(AvfusionError, ValueError):
    exit_code = 3


class DependencyError(AvfusionError):
    exit_code = 4


class DataError(AvfusionError, ValueError):
    exit_code = 5


class SyncError(DataError):
    """Modalities disagree on frame count after synchronisation."""


class TrainingError(AvfusionError, ArithmeticError):
    """Non-finite values appeared during training (divergence)."""

    exit_code = 6


class CheckpointError(AvfusionError):
    exit_code = 5


class ChecksumError(CheckpointError):
    pass


class FormatError(CheckpointError):
    pass
