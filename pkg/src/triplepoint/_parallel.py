from __future__ import annotations

import contextvars
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

from .exceptions import SeriesPointError, TriplePointError

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 0) -> list[R]:
    """Apply `fn` to every item and return the results in item order.

    `threads=0` runs sequentially in the calling thread. Otherwise each call runs in a copy of the
    caller's context, so worker spans attach to the active run trace. Results never depend on
    the thread count.
    """
    if threads <= 0 or len(items) <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="triplepoint") as pool:
        futures = [pool.submit(contextvars.copy_context().run, fn, item) for item in items]
        return [future.result() for future in futures]


def indexed_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 0) -> list[R]:
    """Like `ordered_map`, but a library error from item `i` is re-raised as a
    `SeriesPointError` carrying `i`. The lowest failing index wins.
    """

    def call(pair: tuple[int, T]) -> R:
        index, item = pair
        try:
            return fn(item)
        except SeriesPointError:
            raise
        except TriplePointError as e:
            raise SeriesPointError(index, e) from e

    return ordered_map(call, list(enumerate(items)), threads)
