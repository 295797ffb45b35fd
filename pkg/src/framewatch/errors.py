"""Exception types shared across the package."""

from __future__ import annotations


class FramewatchError(Exception):
    """Base class for all framewatch errors."""


class ConfigError(FramewatchError):
    """Invalid or unparseable pipeline configuration."""


class PromptBindingError(ConfigError):
    """A prompt template placeholder has no binding."""

    def __init__(self, placeholder: str):
        super().__init__(f"no binding for placeholder {{{placeholder}}}")
        self.placeholder = placeholder


class IngestError(FramewatchError):
    """Frame ingestion failed (bad source, bad rate, bad directory)."""


class DecoderError(IngestError):
    """The external video decoder failed or is unavailable."""


class DetectorError(FramewatchError):
    """Detector backend unavailable or returned malformed output."""


class ProviderError(FramewatchError):
    """Vision/text provider call failed."""


class TransientProviderError(ProviderError):
    """Retryable provider failure (timeouts, 429/5xx, connection resets)."""


class ProviderAuthError(ProviderError):
    """Missing or rejected API credentials."""


class RetriesExhaustedError(ProviderError):
    """All retry attempts failed."""

    def __init__(self, attempts: int, last_error: Exception):
        super().__init__(f"provider call failed after {attempts} attempts: {last_error}")
        self.attempts = attempts
        self.last_error = last_error


class StoreError(FramewatchError):
    """Run store failure."""


class RunNotFoundError(StoreError):
    """No run with the given id under the data root."""


class RunExistsError(StoreError):
    """Attempt to create a run id that already exists (runs are immutable)."""


class DuplicateFrameError(StoreError):
    """A description for this frame number was already appended."""


class CorruptRecordError(StoreError):
    """A descriptions-log line failed to parse.

    Carries the 1-based line number and every record that parsed cleanly
    before the corruption, so callers can salvage the prefix.
    """

    def __init__(self, path, line_number: int, reason: str, partial_records):
        super().__init__(f"{path}: corrupt record at line {line_number}: {reason}")
        self.path = path
        self.line_number = line_number
        self.reason = reason
        self.partial_records = list(partial_records)


class EvaluationError(FramewatchError):
    """Scoring input is unusable (empty ground truth, bad batch pair)."""


class EmbeddingFormatError(EvaluationError):
    """Embedding file violates the one-word-per-line vector format."""

    def __init__(self, path, line_number: int, reason: str):
        super().__init__(f"{path}: line {line_number}: {reason}")
        self.path = path
        self.line_number = line_number


class ReportError(FramewatchError):
    """Report cannot be rendered (incomplete run)."""
