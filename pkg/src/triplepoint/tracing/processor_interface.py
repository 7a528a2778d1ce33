from __future__ import annotations

import abc
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .spans import Span
    from .traces import Trace


class TracingProcessor(abc.ABC):
    """Receives run traces and stage spans as they open and close.

    Hooks run synchronously on whichever thread opens or closes the span; series sweeps close
    spans on worker threads, so implementations must be thread-safe and must not raise.
    """

    @abc.abstractmethod
    def on_trace_start(self, trace: Trace) -> None:
        pass

    @abc.abstractmethod
    def on_trace_end(self, trace: Trace) -> None:
        pass

    @abc.abstractmethod
    def on_span_start(self, span: Span[Any]) -> None:
        pass

    @abc.abstractmethod
    def on_span_end(self, span: Span[Any]) -> None:
        """`span.elapsed` and `span.error` are final by now."""
        pass

    @abc.abstractmethod
    def shutdown(self) -> None:
        pass

    @abc.abstractmethod
    def force_flush(self) -> None:
        """Write out anything buffered. Processors that keep nothing pending make this a no-op."""
        pass
