from __future__ import annotations

import contextvars
from typing import Any, Generic, TypeVar

from typing_extensions import TypedDict

from ..logger import logger
from . import util
from .processor_interface import TracingProcessor
from .scope import Scope
from .span_data import SpanData

TSpanData = TypeVar("TSpanData", bound=SpanData)

NO_OP_ID = "no-op"


class SpanError(TypedDict):
    message: str
    data: dict[str, Any] | None


class Span(Generic[TSpanData]):
    """One timed stage of a run.

    A span without a processor is not recorded: it still becomes the current span while open, so
    stages nested under it are silenced too, but it keeps no timestamps and exports nothing.
    """

    __slots__ = (
        "_span_data",
        "_processor",
        "_trace_id",
        "_span_id",
        "_parent_id",
        "_started_at",
        "_ended_at",
        "_clock_start",
        "_elapsed",
        "_error",
        "_token",
    )

    def __init__(
        self,
        span_data: TSpanData,
        processor: TracingProcessor | None = None,
        trace_id: str = NO_OP_ID,
        parent_id: str | None = None,
        span_id: str | None = None,
    ):
        self._span_data = span_data
        self._processor = processor
        self._trace_id = trace_id
        self._parent_id = parent_id
        if processor is None:
            self._span_id = NO_OP_ID
        else:
            self._span_id = span_id or util.gen_span_id()
        self._started_at: str | None = None
        self._ended_at: str | None = None
        self._clock_start: float | None = None
        self._elapsed: float | None = None
        self._error: SpanError | None = None
        self._token: contextvars.Token[Span[Any] | None] | None = None

    @classmethod
    def noop(cls, span_data: TSpanData) -> Span[TSpanData]:
        return cls(span_data)

    @property
    def recording(self) -> bool:
        return self._processor is not None

    @property
    def trace_id(self) -> str:
        return self._trace_id

    @property
    def span_id(self) -> str:
        return self._span_id

    @property
    def parent_id(self) -> str | None:
        return self._parent_id

    @property
    def span_data(self) -> TSpanData:
        return self._span_data

    @property
    def started_at(self) -> str | None:
        return self._started_at

    @property
    def ended_at(self) -> str | None:
        return self._ended_at

    @property
    def elapsed(self) -> float | None:
        """Monotonic duration in seconds, once finished."""
        return self._elapsed

    @property
    def error(self) -> SpanError | None:
        return self._error

    def set_error(self, error: SpanError) -> None:
        if self.recording:
            self._error = error

    def start(self, mark_as_current: bool = False) -> None:
        """Start the span; with `mark_as_current`, stages opened meanwhile nest under it."""
        if self._processor is not None:
            if self._started_at is not None:
                logger.warning(f"Stage span {self._span_id} already started")
                return
            self._started_at = util.time_iso()
            self._clock_start = util.monotonic()
            self._processor.on_span_start(self)
        if mark_as_current:
            self._token = Scope.set_current_span(self)

    def finish(self, reset_current: bool = False) -> None:
        if self._processor is not None:
            if self._ended_at is not None:
                logger.warning(f"Stage span {self._span_id} already finished")
                return
            self._ended_at = util.time_iso()
            if self._clock_start is not None:
                self._elapsed = util.monotonic() - self._clock_start
            self._processor.on_span_end(self)
        if reset_current and self._token is not None:
            Scope.reset_current_span(self._token)
            self._token = None

    def __enter__(self) -> Span[TSpanData]:
        self.start(mark_as_current=True)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_val is not None and not isinstance(exc_val, GeneratorExit):
            # Library errors carry `.message`; anything else falls back to str().
            self.set_error(
                SpanError(
                    message=getattr(exc_val, "message", str(exc_val)),
                    data={"error_type": type(exc_val).__name__},
                )
            )
        self.finish(reset_current=exc_type is not GeneratorExit)

    def export(self) -> dict[str, Any] | None:
        if not self.recording:
            return None
        return {
            "object": "run.stage",
            "id": self._span_id,
            "trace_id": self._trace_id,
            "parent_id": self._parent_id,
            "started_at": self._started_at,
            "ended_at": self._ended_at,
            "elapsed": self._elapsed,
            "span_data": self._span_data.export(),
            "error": self._error,
        }
