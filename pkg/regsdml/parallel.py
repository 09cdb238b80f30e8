from __future__ import annotations

import logging
from collections.abc import Callable
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def map_ordered(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Apply ``func`` to every item, returning results in input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as executor:
        return list(executor.map(func, items))
