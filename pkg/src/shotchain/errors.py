"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ShotChainError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(ShotChainError):
    """A caller-supplied value violates a documented precondition."""


class ConfigError(ShotChainError):
    """Bad configuration value or inconsistent configuration files."""


class DatasetError(ShotChainError):
    """A dataset file is malformed; the message names the offending line."""


class FeatureFileError(ShotChainError):
    """A feature file cannot be decoded."""


class BadMagicError(FeatureFileError):
    """The file does not start with the expected magic bytes."""


class TruncatedFileError(FeatureFileError):
    """The file ends before the payload promised by its header."""


class DimMismatchError(FeatureFileError):
    """A vector dimension disagrees with the declared or expected one."""


class MissingFrameError(ShotChainError):
    """A frame image referenced by index is not present on disk."""


class ProviderError(ShotChainError):
    """Base class for model-backend failures. Carries the request id."""

    def __init__(self, message: str, request_id: str | None = None):
        super().__init__(message)
        self.request_id = request_id


class TransportError(ProviderError):
    """Network failure or timeout after all retries were exhausted."""


class AuthError(ProviderError):
    """The backend rejected the credentials. Never retried."""


class MalformedResponseError(ProviderError):
    """The backend replied but not in the shape we asked for."""


class ScriptedRuleError(ProviderError):
    """A scripted provider had no rule matching the request."""


class UnparseableDecisionError(ShotChainError):
    """Model text did not contain a recognizable yes/no decision."""


class UnparseableAnswerError(ShotChainError):
    """Model text did not contain a recognizable option letter."""


class UnparseableConfidenceError(ShotChainError):
    """Model text did not contain a recognizable confidence level."""


class MissingPlaceholderError(ShotChainError):
    """A prompt template required a field the context did not provide."""
