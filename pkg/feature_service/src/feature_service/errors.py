class FeatureServiceError(Exception):
    """Base for everything this package raises on purpose."""


class DecodeError(FeatureServiceError):
    """The video could not be opened or yielded no frames."""


class EncoderError(FeatureServiceError):
    """Unknown encoder name, unusable input, or a missing backend."""
