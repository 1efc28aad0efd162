"""
Custom Exceptions for THCT-Net.

This module defines the exception hierarchy used throughout the package.
"""


class THCTError(Exception):
    """Base exception for all THCT-Net errors."""
    pass


class ConfigurationError(THCTError):
    """Error in model or training configuration."""
    pass


class UsageError(THCTError):
    """Error in command-line usage."""
    pass


class ShapeError(THCTError):
    """Tensor extents are incompatible with the requested operation."""
    pass


class InvalidPermutationError(ShapeError):
    """Axis or entity order is not a permutation."""
    pass


class BroadcastError(ShapeError):
    """Operand pair is neither same-shaped nor scalar-against-tensor."""
    pass


class DTypeMismatchError(THCTError):
    """Operands were constructed in different numeric modes."""
    pass


class GradientError(THCTError):
    """Error during reverse-mode differentiation."""
    pass


class NonDeterministicFunctionError(GradientError):
    """A function under gradient check returned different values on repeated calls."""
    pass


class NumericalError(THCTError):
    """NaN or Inf encountered in a checked computation."""
    pass


class DegenerateBatchError(THCTError):
    """Batch statistics requested on fewer than two samples."""
    pass


class DataError(THCTError):
    """Error loading or preparing skeleton data."""
    pass


class SkeletonParseError(DataError):
    """Malformed NTU skeleton text; `source` names the file when one is known."""

    def __init__(self, message: str, line: int, source: str = ""):
        prefix = f"{source}: " if source else ""
        super().__init__(f"{prefix}line {line}: {message}")
        self.reason = message
        self.line = line
        self.source = source


class DatasetCacheError(DataError):
    """Malformed or unreadable dataset cache file."""
    pass


class CheckpointError(THCTError):
    """Error reading or writing a checkpoint."""
    pass


class CheckpointMagicError(CheckpointError):
    """Checkpoint does not start with the expected magic bytes."""
    pass


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an unsupported format version."""
    pass


class CheckpointTruncatedError(CheckpointError):
    """Checkpoint ended before all declared fields were read."""
    pass


class CheckpointMismatchError(CheckpointError):
    """Checkpoint tensors do not fit the model built from the configuration."""
    pass


class StorageError(THCTError):
    """Error related to metrics log storage."""
    pass
