from __future__ import annotations

from typing import Any

from ..logger import logger
from .setup import GLOBAL_TRACE_PROVIDER
from .span_data import SeriesPointSpanData, StageSpanData
from .spans import Span, SpanError
from .traces import Trace


def trace(
    experiment: str,
    trace_id: str | None = None,
    metadata: dict[str, Any] | None = None,
    disabled: bool = False,
) -> Trace:
    """
    Create a new run trace. The trace is not started automatically; use it as a context manager
    (`with trace(...):`) or call `start()` and `finish()` yourself.

    Args:
        experiment: The experiment name, e.g. "zero_count".
        trace_id: The ID of the trace. Generated when omitted.
        metadata: Extra information stored on the trace, such as the config hash.
        disabled: If True, the returned trace is not recorded.
    """
    current_trace = GLOBAL_TRACE_PROVIDER.get_current_trace()
    if current_trace:
        logger.warning("Run trace already exists. Creating a new one; this is probably a mistake.")

    return GLOBAL_TRACE_PROVIDER.create_trace(
        name=experiment,
        trace_id=trace_id,
        metadata=metadata,
        disabled=disabled,
    )


def get_current_trace() -> Trace | None:
    """Returns the currently active trace, if present."""
    return GLOBAL_TRACE_PROVIDER.get_current_trace()


def get_current_span() -> Span[Any] | None:
    """Returns the currently active span, if present."""
    return GLOBAL_TRACE_PROVIDER.get_current_span()


def stage_span(
    stage: str,
    parameters: dict[str, Any] | None = None,
    parent: Trace | Span[Any] | None = None,
    disabled: bool = False,
) -> Span[StageSpanData]:
    """Create a new stage span. Outside an active run trace the span is a no-op.

    Args:
        stage: The stage name. Timing tables aggregate by this name.
        parameters: Inputs worth recording (λ, h, tolerances).
        parent: The parent span or trace. Defaults to the current span or trace.
        disabled: If True, the span is not recorded.
    """
    return GLOBAL_TRACE_PROVIDER.create_span(
        span_data=StageSpanData(stage=stage, parameters=parameters),
        parent=parent,
        disabled=disabled,
    )


def series_point_span(
    series: str,
    index: int,
    value: float,
    parent: Trace | Span[Any] | None = None,
) -> Span[SeriesPointSpanData]:
    """Create a span for one point of a sweep."""
    return GLOBAL_TRACE_PROVIDER.create_span(
        span_data=SeriesPointSpanData(series=series, index=index, value=value),
        parent=parent,
    )


def attach_error_to_current_span(error: SpanError) -> None:
    span = get_current_span()
    if span:
        span.set_error(error)
    else:
        logger.debug(f"No span to add error {error} to")
