"""Recorded histories and their JSONL file format.

One event per line, fields in this exact order::

    {"seq", "tx", "kind", "obj", "value", "source_ts", "outcome", "meta"}

``kind`` is one of ``begin``, ``read``, ``write``, ``tryC`` and ``abort`` (an
explicit or completion-inserted tryA). ``source_ts`` on a successful read is
the cts of the transaction that created the version read; ``0`` is the
initial transaction T0. Reads served from a transaction's own buffers are
not recorded.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from typing import Any, Iterable, Iterator, Optional

FIELDS = ("seq", "tx", "kind", "obj", "value", "source_ts", "outcome", "meta")
KINDS = ("begin", "read", "write", "tryC", "abort")
OUTCOMES = ("ok", "commit", "abort")


class MalformedHistory(ValueError):
    """A history violates per-transaction well-formedness."""


@dataclass(frozen=True)
class HistoryEvent:
    seq: int
    tx: int
    kind: str
    obj: Optional[int] = None
    value: Any = None
    source_ts: Optional[int] = None
    outcome: str = "ok"
    meta: Optional[dict] = None

    @property
    def terminal(self) -> bool:
        return self.outcome in ("commit", "abort")

    def to_json(self) -> str:
        return json.dumps({f: getattr(self, f) for f in FIELDS}, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "HistoryEvent":
        if set(d) != set(FIELDS):
            raise ValueError(f"expected fields {FIELDS}, got {sorted(d)}")
        if d["kind"] not in KINDS:
            raise ValueError(f"unknown kind {d['kind']!r}")
        if d["outcome"] not in OUTCOMES:
            raise ValueError(f"unknown outcome {d['outcome']!r}")
        return cls(**d)


class History:
    """An immutable, sequential history with a per-transaction index."""

    def __init__(self, events: Iterable[HistoryEvent] = (), check: bool = True):
        self.events: tuple[HistoryEvent, ...] = tuple(events)
        self.txns: dict[int, list[HistoryEvent]] = {}
        for e in self.events:
            self.txns.setdefault(e.tx, []).append(e)
        if check:
            self._check()

    def _check(self) -> None:
        last = None
        for e in self.events:
            if last is not None and e.seq <= last:
                raise MalformedHistory(f"seq not increasing at {e.seq}")
            last = e.seq
        for tx, evs in self.txns.items():
            if tx == 0:
                raise MalformedHistory("T0 is implicit and may not appear")
            if evs[0].kind != "begin":
                raise MalformedHistory(f"T{tx} does not start with begin")
            if any(e.kind == "begin" for e in evs[1:]):
                raise MalformedHistory(f"T{tx} begins twice")
            for e in evs[:-1]:
                if e.terminal:
                    raise MalformedHistory(f"T{tx} has events after termination")

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[HistoryEvent]:
        return iter(self.events)

    def __eq__(self, other) -> bool:
        return isinstance(other, History) and self.events == other.events

    def status(self, tx: int) -> str:
        last = self.txns[tx][-1]
        if last.outcome == "commit":
            return "committed"
        if last.outcome == "abort":
            return "aborted"
        return "live"

    def committed(self) -> list[int]:
        return [t for t in self.txns if self.status(t) == "committed"]

    def aborted(self) -> list[int]:
        return [t for t in self.txns if self.status(t) == "aborted"]

    def live(self) -> list[int]:
        return [t for t in self.txns if self.status(t) == "live"]

    def restrict(self, txs) -> "History":
        keep = set(txs)
        return History([e for e in self.events if e.tx in keep], check=False)

    def renumbered(self) -> "History":
        return History([replace(e, seq=i) for i, e in enumerate(self.events)], check=False)

    # file format -----------------------------------------------------------

    def dumps(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "History":
        events = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                events.append(HistoryEvent.from_dict(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise MalformedHistory(f"line {lineno}: {exc}") from exc
        return cls(events)

    @classmethod
    def load(cls, path) -> "History":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


class Recorder:
    """Thread-safe event sink.

    ``lock`` is exposed so a protocol can draw a timestamp and log the event
    that depends on it in one step.
    """

    def __init__(self):
        self.lock = threading.RLock()
        self._events: list[HistoryEvent] = []

    def emit(self, tx, kind, obj=None, value=None, source_ts=None,
             outcome="ok", meta=None) -> HistoryEvent:
        with self.lock:
            e = HistoryEvent(len(self._events), tx, kind, obj, value, source_ts,
                             outcome, meta)
            self._events.append(e)
            return e

    def history(self) -> History:
        with self.lock:
            return History(list(self._events))

    def __len__(self) -> int:
        return len(self._events)


class HistoryBuilder:
    """Compact hand-written histories for tests and worked examples.

    >>> h = (HistoryBuilder().begin(1).read(1, "x", 0).write(1, "x", 5)
    ...      .commit(1).build())
    """

    def __init__(self, objects: Optional[dict] = None):
        self._events: list[HistoryEvent] = []
        self._objects = dict(objects or {})

    def _oid(self, obj):
        if isinstance(obj, int):
            return obj
        return self._objects.setdefault(obj, len(self._objects))

    def _add(self, **kw):
        self._events.append(HistoryEvent(seq=len(self._events), **kw))
        return self

    def begin(self, tx, **meta):
        return self._add(tx=tx, kind="begin", meta=meta or None)

    def read(self, tx, obj, source, value=None):
        return self._add(tx=tx, kind="read", obj=self._oid(obj), value=value,
                         source_ts=source)

    def read_abort(self, tx, obj):
        return self._add(tx=tx, kind="read", obj=self._oid(obj), outcome="abort")

    def write(self, tx, obj, value=None):
        return self._add(tx=tx, kind="write", obj=self._oid(obj), value=value)

    def commit(self, tx, **meta):
        return self._add(tx=tx, kind="tryC", outcome="commit", meta=meta or None)

    def tryc_abort(self, tx):
        return self._add(tx=tx, kind="tryC", outcome="abort")

    def abort(self, tx):
        return self._add(tx=tx, kind="abort", outcome="abort")

    def build(self) -> History:
        return History(self._events)
