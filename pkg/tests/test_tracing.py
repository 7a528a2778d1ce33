from __future__ import annotations

from typing import Any

import pytest

from triplepoint._parallel import indexed_map, ordered_map
from triplepoint.exceptions import RangeError, SeriesPointError
from triplepoint.tracing import (
    Span,
    SpanError,
    StageSpanData,
    StageTimingProcessor,
    Trace,
    attach_error_to_current_span,
    get_current_span,
    get_current_trace,
    series_point_span,
    set_trace_processors,
    set_tracing_disabled,
    stage_span,
    trace,
)

from .testing_processor import (
    SPAN_PROCESSOR_TESTING,
    fetch_events,
    fetch_ordered_spans,
    fetch_traces,
)

### HELPERS


def standard_span_checks(
    span: Span[Any], trace_id: str, parent_id: str | None, span_type: str
) -> None:
    assert span.span_id is not None
    assert span.trace_id == trace_id
    assert span.parent_id == parent_id
    assert span.started_at is not None
    assert span.ended_at is not None
    assert span.elapsed is not None and span.elapsed >= 0.0
    assert span.span_data.type == span_type


def standard_trace_checks(trace: Trace, name_check: str | None = None) -> None:
    assert trace.trace_id is not None

    if name_check:
        assert trace.name == name_check


def by_stage(spans: list[Span[Any]], stage: str) -> Span[Any]:
    matches = [s for s in spans if isinstance(s.span_data, StageSpanData)]
    matches = [s for s in matches if s.span_data.stage == stage]
    assert len(matches) == 1, f"expected one {stage} span, got {len(matches)}"
    return matches[0]


### TESTS


def test_simple_tracing() -> None:
    x = trace("test")
    x.start()

    span_1 = stage_span("center", parent=x)
    span_1.start()
    span_1.finish()

    span_2 = stage_span("sweep", parent=x)
    span_2.start()
    span_3 = stage_span("trace_oval", {"h": 0.1}, parent=span_2)
    span_3.start()
    span_3.finish()
    span_2.finish()

    x.finish()

    spans, traces = fetch_ordered_spans(), fetch_traces()
    assert len(spans) == 3
    assert len(traces) == 1

    trace_id = traces[0].trace_id
    standard_trace_checks(traces[0], name_check="test")

    standard_span_checks(by_stage(spans, "center"), trace_id, None, "stage")
    sweep = by_stage(spans, "sweep")
    standard_span_checks(sweep, trace_id, None, "stage")
    inner = by_stage(spans, "trace_oval")
    standard_span_checks(inner, trace_id, sweep.span_id, "stage")
    assert inner.span_data.parameters == {"h": 0.1}


def test_ctxmanager_spans() -> None:
    with trace("test", trace_id="run_123") as t:
        assert get_current_trace() is t
        with stage_span("integral_series") as outer:
            assert get_current_span() is outer
            with stage_span("pseudo_abelian"):
                pass
            assert get_current_span() is outer
        with stage_span("zero_scan"):
            pass
    assert get_current_trace() is None

    spans = fetch_ordered_spans()
    assert len(spans) == 3
    outer_span = by_stage(spans, "integral_series")
    standard_span_checks(outer_span, "run_123", None, "stage")
    inner_span = by_stage(spans, "pseudo_abelian")
    standard_span_checks(inner_span, "run_123", outer_span.span_id, "stage")
    standard_span_checks(by_stage(spans, "zero_scan"), "run_123", None, "stage")

    assert fetch_events() == [
        "trace_start",
        "span_start",
        "span_start",
        "span_end",
        "span_end",
        "span_start",
        "span_end",
        "trace_end",
    ]


def test_stage_result_is_exported() -> None:
    with trace("test"):
        with stage_span("fit", {"lambda": 0.01}) as span:
            span.span_data.result["residual"] = 1e-9

    exported = fetch_ordered_spans()[0].export()
    assert exported is not None
    assert exported["span_data"] == {
        "type": "stage",
        "stage": "fit",
        "parameters": {"lambda": 0.01},
        "result": {"residual": 1e-9},
    }


def test_series_point_span() -> None:
    with trace("test"):
        with series_point_span("integral_series", 3, 0.05):
            pass

    span = fetch_ordered_spans()[0]
    assert span.span_data.type == "series_point"
    assert span.span_data.export() == {
        "type": "series_point",
        "series": "integral_series",
        "index": 3,
        "value": 0.05,
    }


def test_spans_outside_a_trace_are_noops() -> None:
    with stage_span("orphan") as span:
        assert span.export() is None
        assert span.trace_id == "no-op"

    assert fetch_ordered_spans() == []
    assert fetch_traces() == []


def test_disabled_tracing() -> None:
    set_tracing_disabled(True)
    try:
        with trace("test"):
            with stage_span("center"):
                pass
    finally:
        set_tracing_disabled(False)

    assert fetch_ordered_spans() == []
    assert fetch_traces() == []


def test_disabled_span_is_not_recorded() -> None:
    with trace("test"):
        with stage_span("quiet", disabled=True):
            with stage_span("child_of_quiet"):
                pass
        with stage_span("loud"):
            pass

    spans = fetch_ordered_spans()
    assert [s.span_data.stage for s in spans] == ["loud"]


def test_exception_is_attached_to_span() -> None:
    with pytest.raises(RangeError):
        with trace("test"):
            with stage_span("trace_oval"):
                raise RangeError("Level 0.2 is outside the nest range (0, 0.148)")

    span = fetch_ordered_spans()[0]
    assert span.error == SpanError(
        message="Level 0.2 is outside the nest range (0, 0.148)",
        data={"error_type": "RangeError"},
    )


def test_attach_error_to_current_span() -> None:
    with trace("test"):
        with stage_span("fit"):
            attach_error_to_current_span(SpanError(message="too noisy", data=None))

    assert fetch_ordered_spans()[0].error == {"message": "too noisy", "data": None}


def test_worker_spans_attach_to_the_active_trace() -> None:
    def work(item: int) -> int:
        with stage_span("item", {"item": item}):
            return item * item

    with trace("test") as t:
        with stage_span("sweep") as sweep:
            results = ordered_map(work, list(range(6)), threads=3)

    assert results == [0, 1, 4, 9, 16, 25]
    items = [s for s in fetch_ordered_spans() if s.span_data.stage == "item"]
    assert len(items) == 6
    for span in items:
        assert span.trace_id == t.trace_id
        assert span.parent_id == sweep.span_id


def test_indexed_map_reports_the_lowest_failing_index() -> None:
    def fail_on_odd(item: int) -> int:
        if item % 2:
            raise RangeError(f"bad item {item}")
        return item

    with pytest.raises(SeriesPointError) as exc_info:
        indexed_map(fail_on_odd, [0, 2, 3, 5], threads=2)

    assert exc_info.value.index == 2
    assert isinstance(exc_info.value.cause, RangeError)


def test_stage_timing_processor_aggregates_per_stage() -> None:
    processor = StageTimingProcessor()
    set_trace_processors([SPAN_PROCESSOR_TESTING, processor])
    try:
        with trace("test") as t:
            for _ in range(3):
                with stage_span("trace_oval"):
                    pass
            with pytest.raises(RangeError):
                with stage_span("center"):
                    raise RangeError("no center")
            with series_point_span("sweep", 0, 0.1):
                pass
    finally:
        set_trace_processors([SPAN_PROCESSOR_TESTING])

    timings = processor.timings(t.trace_id)
    assert list(timings) == ["center", "trace_oval"]
    assert timings["trace_oval"]["count"] == 3
    assert timings["trace_oval"]["failures"] == 0
    assert timings["center"]["failures"] == 1
    assert timings["trace_oval"]["max_seconds"] <= timings["trace_oval"]["total_seconds"]

    processor.discard(t.trace_id)
    assert processor.timings(t.trace_id) == {}
