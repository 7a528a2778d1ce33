from __future__ import annotations

import threading
from typing import Any

from .. import _debug
from ..logger import logger
from .processor_interface import TracingProcessor
from .scope import Scope
from .spans import Span, TSpanData
from .traces import Trace


class ProcessorFanout(TracingProcessor):
    """Calls every registered processor in registration order, on the calling thread."""

    def __init__(self) -> None:
        # Replaced wholesale under the lock, so worker threads iterate a stable tuple.
        self._processors: tuple[TracingProcessor, ...] = ()
        self._lock = threading.Lock()

    @property
    def processors(self) -> tuple[TracingProcessor, ...]:
        return self._processors

    def add(self, processor: TracingProcessor) -> None:
        with self._lock:
            self._processors = (*self._processors, processor)

    def replace(self, processors: list[TracingProcessor]) -> None:
        with self._lock:
            self._processors = tuple(processors)

    def on_trace_start(self, trace: Trace) -> None:
        for p in self._processors:
            p.on_trace_start(trace)

    def on_trace_end(self, trace: Trace) -> None:
        for p in self._processors:
            p.on_trace_end(trace)

    def on_span_start(self, span: Span[Any]) -> None:
        for p in self._processors:
            p.on_span_start(span)

    def on_span_end(self, span: Span[Any]) -> None:
        for p in self._processors:
            p.on_span_end(span)

    def shutdown(self) -> None:
        for p in self._processors:
            logger.debug(f"Shutting down trace processor {p}")
            p.shutdown()

    def force_flush(self) -> None:
        for p in self._processors:
            p.force_flush()


class TraceProvider:
    """Creates run traces and stage spans, and decides which of them are recorded."""

    def __init__(self) -> None:
        self._fanout = ProcessorFanout()
        self._disabled = _debug.DISABLE_TRACING

    def register_processor(self, processor: TracingProcessor) -> None:
        self._fanout.add(processor)

    def set_processors(self, processors: list[TracingProcessor]) -> None:
        self._fanout.replace(processors)

    def get_current_trace(self) -> Trace | None:
        return Scope.get_current_trace()

    def get_current_span(self) -> Span[Any] | None:
        return Scope.get_current_span()

    def set_disabled(self, disabled: bool) -> None:
        self._disabled = disabled

    @property
    def disabled(self) -> bool:
        return self._disabled

    def create_trace(
        self,
        name: str,
        trace_id: str | None = None,
        metadata: dict[str, Any] | None = None,
        disabled: bool = False,
    ) -> Trace:
        if self._disabled or disabled:
            logger.debug(f"Tracing is disabled; run {name} is not recorded")
            return Trace.noop()
        trace = Trace(name, self._fanout, trace_id, metadata)
        logger.debug(f"Creating run trace {name} with id {trace.trace_id}")
        return trace

    def create_span(
        self,
        span_data: TSpanData,
        span_id: str | None = None,
        parent: Trace | Span[Any] | None = None,
        disabled: bool = False,
    ) -> Span[TSpanData]:
        """A recorded span under `parent` (by default the current span, else the current trace).

        The span is a no-op when tracing is off, when it is asked to be, when there is no run to
        attach it to, or when its parent is itself a no-op.
        """
        if self._disabled or disabled:
            return Span.noop(span_data)

        if parent is None:
            trace = Scope.get_current_trace()
            current = Scope.get_current_span()
            if trace is None or not trace.recording:
                return Span.noop(span_data)
            if current is not None and not current.recording:
                return Span.noop(span_data)
            trace_id = trace.trace_id
            parent_id = current.span_id if current is not None else None
        else:
            if not parent.recording:
                return Span.noop(span_data)
            trace_id = parent.trace_id
            parent_id = parent.span_id if isinstance(parent, Span) else None

        return Span(span_data, self._fanout, trace_id, parent_id, span_id)

    def shutdown(self) -> None:
        try:
            logger.debug("Shutting down trace provider")
            self._fanout.shutdown()
        except Exception as e:
            logger.error(f"Error shutting down trace provider: {e}")


GLOBAL_TRACE_PROVIDER = TraceProvider()
