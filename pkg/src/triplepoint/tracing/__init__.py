import atexit

from .create import (
    attach_error_to_current_span,
    get_current_span,
    get_current_trace,
    series_point_span,
    stage_span,
    trace,
)
from .processor_interface import TracingProcessor
from .processors import (
    LoggingSpanProcessor,
    StageTiming,
    StageTimingProcessor,
    default_timing_processor,
)
from .setup import GLOBAL_TRACE_PROVIDER
from .span_data import SeriesPointSpanData, SpanData, StageSpanData
from .spans import Span, SpanError
from .traces import Trace
from .util import gen_span_id, gen_trace_id

__all__ = [
    "add_trace_processor",
    "attach_error_to_current_span",
    "get_current_span",
    "get_current_trace",
    "series_point_span",
    "set_trace_processors",
    "set_tracing_disabled",
    "stage_span",
    "trace",
    "Trace",
    "Span",
    "SpanError",
    "SpanData",
    "StageSpanData",
    "SeriesPointSpanData",
    "TracingProcessor",
    "StageTiming",
    "StageTimingProcessor",
    "LoggingSpanProcessor",
    "default_timing_processor",
    "gen_trace_id",
    "gen_span_id",
]


def add_trace_processor(span_processor: TracingProcessor) -> None:
    """
    Adds a new trace processor. This processor will receive all traces/spans.
    """
    GLOBAL_TRACE_PROVIDER.register_processor(span_processor)


def set_trace_processors(processors: list[TracingProcessor]) -> None:
    """
    Set the list of trace processors. This will replace the current list of processors.
    """
    GLOBAL_TRACE_PROVIDER.set_processors(processors)


def set_tracing_disabled(disabled: bool) -> None:
    """
    Set whether tracing is globally disabled.
    """
    GLOBAL_TRACE_PROVIDER.set_disabled(disabled)


# Timing tables for run manifests, plus stage logging. `set_trace_processors()` replaces both.
add_trace_processor(default_timing_processor())
add_trace_processor(LoggingSpanProcessor())

atexit.register(GLOBAL_TRACE_PROVIDER.shutdown)
