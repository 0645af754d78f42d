"""Exception types shared across the package.

Everything raised on purpose derives from WidthnetError so callers (and the
CLI) can distinguish our failures from genuine bugs.
"""


class WidthnetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(WidthnetError, ValueError):
    """Array arguments have incompatible or unsupported shapes."""


class ShapeError(WidthnetError, ValueError):
    """An op required a scalar (or other fixed-rank) tensor and got something else."""


class WidthError(WidthnetError, ValueError):
    """A requested channel width is not available on this layer or model."""


class LabelError(WidthnetError, ValueError):
    """A class label lies outside the valid range."""


class NumericsError(WidthnetError, ArithmeticError):
    """Strict mode found non-finite values in an op result."""


class ConfigurationError(WidthnetError, ValueError):
    """A config value, degradation spec, or dataset is invalid for the run."""


class VerificationError(WidthnetError, RuntimeError):
    """A verification suite found an identity violated beyond tolerance."""


class CheckpointError(WidthnetError):
    """Base class for checkpoint serialization failures."""


class BadMagicError(CheckpointError):
    """The byte stream does not start with the expected magic."""


class ChecksumError(CheckpointError):
    """Stored payload checksum does not match the bytes on disk."""


class ManifestError(CheckpointError):
    """The tensor manifest is inconsistent with the payload."""


class CompatibilityError(WidthnetError):
    """Two artifacts (checkpoint vs config, backbone vs selector) disagree
    on structural fields."""


class StageOrderError(WidthnetError):
    """A pipeline stage ran before the stage it depends on."""
