# spherekit/errors.py


class SphereKitError(Exception):
    """Base class for every error raised by the kernels."""


class DomainError(SphereKitError, ValueError):
    """A coordinate, vector or index lies outside the domain of an operation."""


class ShapeError(SphereKitError, ValueError):
    """Grid, tensor, window or channel dimensions are incompatible."""


class ConfigurationError(SphereKitError, ValueError):
    """A parameter bundle or lookup table is missing or unusable."""


class DegenerateInputError(SphereKitError, ValueError):
    """The input carries too little information for the requested estimate."""


class PfmFormatError(SphereKitError, ValueError):
    """Malformed, truncated or channel-mismatched PFM data."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
