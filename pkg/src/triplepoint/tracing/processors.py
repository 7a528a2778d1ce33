from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import dataclass
from typing import Any

from ..logger import logger
from .processor_interface import TracingProcessor
from .span_data import StageSpanData
from .spans import Span
from .traces import Trace


@dataclass
class StageTiming:
    """Aggregated wall-clock figures for one stage name within a run."""

    count: int = 0
    total_seconds: float = 0.0
    max_seconds: float = 0.0
    failures: int = 0

    def export(self) -> dict[str, Any]:
        return {
            "count": self.count,
            "total_seconds": self.total_seconds,
            "max_seconds": self.max_seconds,
            "failures": self.failures,
        }


class StageTimingProcessor(TracingProcessor):
    """Aggregates finished stage spans per run trace. Run manifests read their timing tables from
    here. Thread-safe: series points finish on worker threads.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._timings: dict[str, dict[str, StageTiming]] = defaultdict(dict)

    def on_trace_start(self, trace: Trace) -> None:
        with self._lock:
            self._timings[trace.trace_id] = {}

    def on_trace_end(self, trace: Trace) -> None:
        pass

    def on_span_start(self, span: Span[Any]) -> None:
        pass

    def on_span_end(self, span: Span[Any]) -> None:
        data = span.span_data
        if not isinstance(data, StageSpanData):
            return
        elapsed = span.elapsed or 0.0
        with self._lock:
            timing = self._timings[span.trace_id].setdefault(data.stage, StageTiming())
            timing.count += 1
            timing.total_seconds += elapsed
            timing.max_seconds = max(timing.max_seconds, elapsed)
            if span.error is not None:
                timing.failures += 1

    def timings(self, trace_id: str) -> dict[str, dict[str, Any]]:
        """The timing table of one run, keyed by stage name."""
        with self._lock:
            return {
                stage: timing.export()
                for stage, timing in sorted(self._timings.get(trace_id, {}).items())
            }

    def discard(self, trace_id: str) -> None:
        with self._lock:
            self._timings.pop(trace_id, None)

    def shutdown(self) -> None:
        with self._lock:
            self._timings.clear()

    def force_flush(self) -> None:
        pass


class LoggingSpanProcessor(TracingProcessor):
    """Logs every finished stage at DEBUG, and failed stages at WARNING."""

    def on_trace_start(self, trace: Trace) -> None:
        logger.debug(f"Run {trace.trace_id} started: {trace.name}")

    def on_trace_end(self, trace: Trace) -> None:
        logger.debug(f"Run {trace.trace_id} finished: {trace.name}")

    def on_span_start(self, span: Span[Any]) -> None:
        pass

    def on_span_end(self, span: Span[Any]) -> None:
        exported = span.span_data.export()
        elapsed = span.elapsed or 0.0
        if span.error is not None:
            logger.warning(
                f"Stage failed after {elapsed:.3f}s: {exported}: {span.error['message']}"
            )
        else:
            logger.debug(f"Stage finished in {elapsed:.3f}s: {exported}")

    def shutdown(self) -> None:
        pass

    def force_flush(self) -> None:
        pass


_global_timing_processor = StageTimingProcessor()


def default_timing_processor() -> StageTimingProcessor:
    """The timing processor registered at import; run manifests read from it."""
    return _global_timing_processor
