"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class InvalidConfigError(ValueError):
    """A model or run configuration field is out of its allowed range."""


class DatasetError(RuntimeError):
    """A dataset directory violates the expected layout."""


class MissingPairError(DatasetError):
    """An image has no matching mask (or vice versa)."""


class TooFewSamplesError(ValueError):
    """Not enough samples to perform the requested split."""


class CheckpointError(RuntimeError):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format tag does not match the supported version."""


class CorruptCheckpointError(CheckpointError):
    """Checkpoint manifest and payload disagree (truncated or damaged file)."""
