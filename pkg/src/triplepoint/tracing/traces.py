from __future__ import annotations

import contextvars
from typing import Any

from ..logger import logger
from . import util
from .processor_interface import TracingProcessor
from .scope import Scope

NO_OP_ID = "no-op"


class Trace:
    """The root of one experiment run; stage spans hang off it.

    Like spans, a trace without a processor is a placeholder: it becomes the current trace, so
    every stage inside it is silenced, and it exports nothing.
    """

    __slots__ = ("_name", "_trace_id", "metadata", "_processor", "_started", "_token")

    def __init__(
        self,
        name: str = NO_OP_ID,
        processor: TracingProcessor | None = None,
        trace_id: str | None = None,
        metadata: dict[str, Any] | None = None,
    ):
        self._name = name
        self._processor = processor
        if processor is None:
            self._trace_id = NO_OP_ID
        else:
            self._trace_id = trace_id or util.gen_trace_id()
        self.metadata = metadata
        self._started = False
        self._token: contextvars.Token[Trace | None] | None = None

    @classmethod
    def noop(cls) -> Trace:
        return cls()

    @property
    def recording(self) -> bool:
        return self._processor is not None

    @property
    def name(self) -> str:
        """The experiment being traced, by default the subcommand."""
        return self._name

    @property
    def trace_id(self) -> str:
        return self._trace_id

    @property
    def started(self) -> bool:
        return self._started

    def start(self, mark_as_current: bool = False) -> None:
        if self._started:
            return
        self._started = True
        if self._processor is not None:
            self._processor.on_trace_start(self)
        if mark_as_current:
            self._token = Scope.set_current_trace(self)

    def finish(self, reset_current: bool = False) -> None:
        if not self._started:
            return
        if self._processor is not None:
            self._processor.on_trace_end(self)
        if reset_current and self._token is not None:
            Scope.reset_current_trace(self._token)
            self._token = None

    def __enter__(self) -> Trace:
        if self._started:
            logger.error(f"Run trace {self._trace_id} already started")
            return self
        self.start(mark_as_current=True)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.finish(reset_current=exc_type is not GeneratorExit)

    def export(self) -> dict[str, Any] | None:
        if not self.recording:
            return None
        return {
            "object": "run",
            "id": self._trace_id,
            "experiment": self._name,
            "metadata": self.metadata,
        }
