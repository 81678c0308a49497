"""Exception hierarchy shared by all llmsqa modules."""

from __future__ import annotations


class LLMSQAError(Exception):
    """Base class for every error raised by this package."""


# -- corpus ingestion -------------------------------------------------------


class CorpusError(LLMSQAError):
    pass


class MissingField(CorpusError):
    def __init__(self, field: str, where: str = "") -> None:
        self.field = field
        self.where = where
        suffix = f" ({where})" if where else ""
        super().__init__(f"missing required field {field!r}{suffix}")


class LineOutOfRange(CorpusError):
    def __init__(self, sample_id: str, line: int, line_count: int) -> None:
        self.sample_id = sample_id
        self.line = line
        self.line_count = line_count
        super().__init__(
            f"sample {sample_id!r}: line {line} outside 1..{line_count}"
        )


class DuplicateId(CorpusError):
    def __init__(self, sample_id: str) -> None:
        self.sample_id = sample_id
        super().__init__(f"duplicate sample id {sample_id!r}")


class EmbeddingDimMismatch(CorpusError):
    pass


class PoolTooSmall(CorpusError):
    def __init__(self, size: int, needed: int) -> None:
        self.size = size
        self.needed = needed
        super().__init__(f"pool has {size} eligible examples, need {needed}")


# -- numerics ---------------------------------------------------------------


class LengthMismatch(LLMSQAError, ValueError):
    pass


class DimMismatch(LLMSQAError, ValueError):
    pass


class ZeroVector(LLMSQAError, ValueError):
    pass


class ZeroBaseline(LLMSQAError, ZeroDivisionError):
    pass


class EmptyInput(LLMSQAError, ValueError):
    pass


# -- prompting --------------------------------------------------------------


class EmptyHints(LLMSQAError, ValueError):
    pass


class EnsureTaskMismatch(LLMSQAError, ValueError):
    pass


# -- gateway ----------------------------------------------------------------


class GatewayError(LLMSQAError):
    pass


class CacheMiss(GatewayError):
    def __init__(self, fingerprint: str, model_id: str) -> None:
        self.fingerprint = fingerprint
        self.model_id = model_id
        super().__init__(f"no cached response for {model_id} request {fingerprint[:12]}")


class TransportError(GatewayError):
    """Network failure, 5xx or rate limiting. Retryable."""


class AuthError(GatewayError):
    pass


class ContextLengthExceeded(GatewayError):
    pass


# -- parsing ----------------------------------------------------------------


class ParseError(LLMSQAError, ValueError):
    pass


class NoFaultLocFound(ParseError):
    pass


class MalformedEntry(ParseError):
    def __init__(self, index: int, reason: str) -> None:
        self.index = index
        super().__init__(f"faultLoc entry {index}: {reason}")


class NoVerdictFound(ParseError):
    pass


# -- ensemble / run ---------------------------------------------------------


class NoAnswers(LLMSQAError, ValueError):
    pass


class ConfigInvalid(LLMSQAError, ValueError):
    pass


class CorpusMismatch(LLMSQAError, ValueError):
    pass


class UnknownBaseline(LLMSQAError, KeyError):
    def __str__(self) -> str:
        return f"unknown baseline configuration {self.args[0]!r}"
