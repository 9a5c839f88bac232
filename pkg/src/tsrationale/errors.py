"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(PipelineError):
    """A declared column is missing or the file layout is wrong."""


class DataParseError(PipelineError):
    """A cell could not be parsed as the expected type."""


class OrderingError(PipelineError):
    """Timestamps are not strictly increasing."""


class InsufficientDataError(PipelineError):
    """The series is too short for the requested windowing."""


class TaskError(PipelineError):
    """A sample or label is inconsistent with its task definition."""


class RenderError(PipelineError):
    """A chart could not be rendered (non-finite cells, empty window)."""


class TransportError(PipelineError):
    """Network failure that persisted through the retry budget."""


class RequestError(PipelineError):
    """The remote endpoint rejected the request (HTTP 4xx)."""


class ReplayMissError(PipelineError):
    """The mock backend has no scripted rule or replay entry for a request."""


class RationaleFormatError(PipelineError):
    """Generated rationale text contains no parseable reasoning paths."""


class SummaryError(PipelineError):
    """The summarizer returned an empty reply."""


class ModeError(PipelineError):
    """The requested inference mode is missing a required input."""


class ParameterError(PipelineError):
    """A retrieval or evaluation parameter is out of range."""


class StateError(PipelineError):
    """An operation was invoked against an empty or unbuilt store."""


class ConsistencyError(PipelineError):
    """Cross-referenced ids do not line up (base vs. retrieval vs. labels)."""
