"""Exception types shared across the package."""


class DrivexplainError(Exception):
    """Base class for package errors."""


class ConfigError(DrivexplainError):
    """Invalid model/train/render configuration."""


class DataFormatError(DrivexplainError):
    """Dataset payload is corrupt or inconsistent with its manifest."""

    def __init__(self, message, sample_id=None):
        super().__init__(message)
        self.sample_id = sample_id


class SchemaVersionError(DrivexplainError):
    """Dataset manifest has an unsupported schema version."""


class CheckpointError(DrivexplainError):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not supported."""


class CheckpointShapeError(CheckpointError):
    """Stored array shape/dtype disagrees with the checkpoint manifest."""


class CheckpointTruncatedError(CheckpointError):
    """Binary tensor payload is shorter than the manifest requires."""


class FingerprintMismatchError(DrivexplainError):
    """Vocabulary or sensor-stats fingerprint does not match the checkpoint."""
