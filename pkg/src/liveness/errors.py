"""Exception hierarchy shared across the package."""


class LivenessError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LivenessError):
    """A tensor shape or layer configuration invariant was violated."""


class NumericError(LivenessError):
    """A layer produced a non-finite value (NaN or Inf)."""


class StateError(LivenessError):
    """An operation was called in an invalid order (e.g. backward before forward)."""


class WeightFileError(LivenessError):
    """Base class for weight-file problems."""


class ChecksumError(WeightFileError):
    """Weight file payload does not match its trailing CRC-32."""


class VersionError(WeightFileError):
    """Weight file declares an unsupported format version."""


class DataError(LivenessError):
    """Invalid dataset, manifest, or image input."""
