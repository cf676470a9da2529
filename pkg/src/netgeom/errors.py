"""Exception hierarchy.

Every failure mode the library promises to detect gets its own class so
callers (and the CLI exit-code mapping) can dispatch on type instead of
parsing messages.
"""


class NetgeomError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(NetgeomError):
    """Dimension mismatch between networks, data, or weight matrices."""


class NotNormalizedError(NetgeomError):
    """An operation required a normalized network and got a raw one."""


class DegenerateUnitError(NetgeomError):
    """A hidden unit has (near-)zero incoming norm and cannot be rescaled."""


class AntipodalError(NetgeomError):
    """Geodesic endpoints are antipodal; the shortest path is not unique."""


class MissingLatentError(NetgeomError):
    """A binary-weight operation needs latent weights that are absent."""


class NumericError(NetgeomError):
    """Non-finite loss or parameters encountered during training."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ConvergenceError(NetgeomError):
    """An optimization stage failed to reach the required train error."""

    def __init__(self, message, achieved_error=None):
        super().__init__(message)
        self.achieved_error = achieved_error


class DegeneratePlaneError(NetgeomError):
    """The three anchor configurations are collinear; no plane is defined."""


class ZeroVarianceError(NetgeomError):
    """Standardization is impossible because the pixel population is constant."""


class IdxFormatError(NetgeomError):
    """Base class for IDX file parsing failures."""


class IdxBadMagicError(IdxFormatError):
    """The IDX magic number is not one of the supported tensor kinds."""


class IdxTruncatedError(IdxFormatError):
    """The IDX payload ends before the declared tensor is complete."""


class IdxDimensionError(IdxFormatError):
    """Declared IDX dimensions are implausibly large (overflow guard)."""


class CheckpointError(NetgeomError):
    """Base class for checkpoint load/save failures."""


class SchemaVersionError(CheckpointError):
    """Checkpoint was written with an unsupported schema version."""


class PayloadLengthError(CheckpointError):
    """Checkpoint payload size disagrees with the manifest architecture."""


class ChecksumError(CheckpointError):
    """Checkpoint payload bytes fail the manifest checksum."""


class ConfigError(NetgeomError):
    """An experiment configuration violates the schema."""
