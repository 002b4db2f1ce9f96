"""Exception hierarchy for LeMoLE."""

from typing import List, Optional


class LemoleError(Exception):
    """Base class for all errors raised by lemole."""


class ConfigError(LemoleError):
    """Invalid run configuration.

    Args:
        messages: One entry per problem, each prefixed with its line when known
    """

    def __init__(self, messages: List[str]):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class MissingArtifact(LemoleError):
    pass


# Data ingestion and windowing


class DataError(LemoleError):
    pass


class MissingColumn(DataError):
    pass


class NonUniformSampling(DataError):
    pass


class NonNumericCell(DataError):
    pass


class EmptyFile(DataError):
    pass


class SplitTooSmall(DataError):
    pass


class ZeroVariance(DataError):
    pass


class FrameTooShort(DataError):
    pass


class WindowExceedsLookback(DataError):
    pass


class NonDescendingWindows(DataError):
    pass


# Model shapes and numerics


class ModelError(LemoleError):
    pass


class ShapeMismatch(ModelError):
    pass


class LengthMismatch(ModelError):
    pass


class DivergenceDetected(ModelError):
    pass


# Prompts and embedding providers


class ProviderError(LemoleError):
    pass


class EmptyTimestamps(ProviderError):
    pass


class EmptyText(ProviderError):
    pass


class ProviderUnavailable(ProviderError):
    def __init__(self, message: str, attempts: Optional[int] = None):
        self.attempts = attempts
        super().__init__(message)


class EmbeddingShapeInvalid(ProviderError):
    pass


class CacheMiss(ProviderError):
    pass


class MalformedResponse(ProviderError):
    pass


class HashMismatch(ProviderError):
    pass


# Statistics


class SeriesTooShort(LemoleError):
    pass


class SingularRegression(LemoleError):
    pass
