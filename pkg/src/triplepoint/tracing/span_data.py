from __future__ import annotations

import abc
from typing import Any


class SpanData(abc.ABC):
    @abc.abstractmethod
    def export(self) -> dict[str, Any]:
        pass

    @property
    @abc.abstractmethod
    def type(self) -> str:
        pass


class StageSpanData(SpanData):
    """One pipeline stage: tracing an oval, a quadrature, a fit, a zero scan, and so on.

    `parameters` are known when the stage starts; `result` is filled in by the stage as it learns
    summary figures (closure defect, error bound, residual, zero count).
    """

    __slots__ = ("stage", "parameters", "result")

    def __init__(
        self,
        stage: str,
        parameters: dict[str, Any] | None = None,
        result: dict[str, Any] | None = None,
    ):
        self.stage = stage
        self.parameters: dict[str, Any] = parameters or {}
        self.result: dict[str, Any] = result or {}

    @property
    def type(self) -> str:
        return "stage"

    def export(self) -> dict[str, Any]:
        return {
            "type": self.type,
            "stage": self.stage,
            "parameters": self.parameters,
            "result": self.result,
        }


class SeriesPointSpanData(SpanData):
    """One point of a series sweep (a level h, or a value of λ)."""

    __slots__ = ("series", "index", "value")

    def __init__(self, series: str, index: int, value: float):
        self.series = series
        self.index = index
        self.value = value

    @property
    def type(self) -> str:
        return "series_point"

    def export(self) -> dict[str, Any]:
        return {
            "type": self.type,
            "series": self.series,
            "index": self.index,
            "value": self.value,
        }
