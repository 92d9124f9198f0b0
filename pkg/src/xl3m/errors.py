"""Exception hierarchy shared across the pipeline, backends, and harnesses."""

from __future__ import annotations


class Xl3mError(Exception):
    """Base class for all library errors."""


class ConfigInvalid(Xl3mError):
    """A configuration violates one of its invariants."""


class SequenceTooShort(Xl3mError):
    """Input sequence is too short to split off a task suffix."""


class EmptyContent(Xl3mError):
    """Content sequence is empty; nothing to segment."""


class IndexOutOfRange(Xl3mError):
    """Segment ordinal outside the decomposition (or decomposition bypassed)."""


class MalformedDistribution(Xl3mError):
    """Log-probability vector fails the normalization check."""


class NonFiniteInput(Xl3mError):
    """Logits contain NaN or infinity."""


class BudgetExceeded(Xl3mError):
    """Spliced key context does not fit the model context window."""


class NeedleTooLong(Xl3mError):
    """Needle does not fit inside the requested haystack."""


class BackendError(Xl3mError):
    """A model-backend call failed.

    When raised by the scorer, ``segment_index`` identifies the sub-context
    whose call failed; the original exception is chained as ``__cause__``.
    """

    def __init__(self, message: str, segment_index: int | None = None):
        super().__init__(message)
        self.segment_index = segment_index


class ContextOverflow(BackendError):
    """Input longer than the backend's context window."""


class TransportError(BackendError):
    """Network-level failure talking to a remote backend (after retries)."""


class ProtocolViolation(BackendError):
    """Remote backend response violates the wire protocol schema or contract."""
