"""Exception hierarchy shared across the runtime."""

from __future__ import annotations


class SpecAgentError(Exception):
    """Base class for all runtime errors."""


# -- backends -----------------------------------------------------------------


class BackendError(SpecAgentError):
    """A model call failed. The orchestrator treats this as a draft failure."""


class BackendTimeout(BackendError):
    pass


class WireError(BackendError):
    """Transport-level or non-2xx failure talking to an HTTP endpoint."""


class MalformedResponse(BackendError):
    """The endpoint (or script) returned something we cannot interpret."""


class InsufficientTopK(BackendError):
    def __init__(self, wanted: int, got: int):
        super().__init__(f"asked for top-{wanted} next tokens, endpoint returned {got}")
        self.wanted = wanted
        self.got = got


class BackendUnavailable(SpecAgentError):
    """The full-capacity model could not produce a step, so the run cannot continue."""


# -- documents ----------------------------------------------------------------


class ParseError(SpecAgentError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)
        self.line = line
        self.column = column


class DuplicateKey(ParseError):
    pass


class TraceParseError(ParseError):
    """Trace files are line-oriented; ``record`` is the 0-based record index."""

    def __init__(self, message: str, record: int):
        super().__init__(f"record {record}: {message}")
        self.record = record


# -- tools --------------------------------------------------------------------


class ToolError(SpecAgentError):
    pass


class ToolTimeout(ToolError):
    pass


class ToolWireError(ToolError):
    pass


class NoFixture(ToolError):
    pass


# -- speculation / analysis / simulation ---------------------------------------


class BothDraftsFailed(SpecAgentError):
    pass


class EmptyInput(SpecAgentError, ValueError):
    pass


class InsufficientData(SpecAgentError, ValueError):
    pass


class LengthMismatch(SpecAgentError, ValueError):
    pass


class ZeroVector(SpecAgentError, ValueError):
    pass


class NonConstantDistribution(SpecAgentError, ValueError):
    pass
