"""Live-transaction registry and version pruning for unbounded stores."""

from __future__ import annotations

import heapq
import threading
from typing import Callable, Optional

from .core import TObject


class LiveList:
    """Thread-safe set of live ``(id, cts)`` entries with a cheap min query.

    A heap with lazy deletion: removed entries stay in the heap until they
    surface at the top, so ``min_cts`` is amortised O(1).
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._live: dict[int, int] = {}
        self._heap: list[tuple[int, int]] = []

    def add(self, tx_id: int, cts: int) -> None:
        with self._lock:
            if tx_id in self._live:
                raise ValueError(f"T{tx_id} already registered")
            self._live[tx_id] = cts
            heapq.heappush(self._heap, (cts, tx_id))

    def register(self, draw: Callable[[], int]) -> int:
        """Draw a cts with ``draw`` and add it, atomically w.r.t. ``min_cts``.

        A GC snapshot can then never miss a transaction whose cts is already
        handed out.
        """
        with self._lock:
            cts = draw()
            if cts in self._live:
                raise ValueError(f"T{cts} already registered")
            self._live[cts] = cts
            heapq.heappush(self._heap, (cts, cts))
            return cts

    def remove(self, tx_id: int) -> None:
        with self._lock:
            if self._live.pop(tx_id, None) is None:
                raise ValueError(f"T{tx_id} not registered")

    def min_cts(self) -> Optional[int]:
        with self._lock:
            heap = self._heap
            while heap and self._live.get(heap[0][1]) != heap[0][0]:
                heapq.heappop(heap)
            return heap[0][0] if heap else None

    def __len__(self) -> int:
        return len(self._live)

    def __contains__(self, tx_id: int) -> bool:
        return tx_id in self._live


def min_live_cts(live: LiveList) -> Optional[int]:
    return live.min_cts()


def _ts_value(v):
    ts = v.ts
    return ts[0] if isinstance(ts, tuple) else ts


def collect(obj: TObject, min_cts: Optional[int]) -> int:
    """Drop versions no live transaction can still select; return the count.

    A version is dropped when its successor's ts is also below ``min_cts``.
    Every live transaction reads with a timestamp >= ``min_cts``, so it can
    only ever select the newest version below ``min_cts`` or something later;
    that version is kept. The latest version always survives.

    Caller holds ``obj.lock``.
    """
    if obj.capacity is not None:
        raise ValueError("collect applies to unbounded objects only")
    if min_cts is None:
        return 0
    versions = obj.versions
    keep_from = 0
    for i in range(1, len(versions)):
        if _ts_value(versions[i]) < min_cts:
            keep_from = i
        else:
            break
    if keep_from:
        del versions[:keep_from]
    return keep_from
