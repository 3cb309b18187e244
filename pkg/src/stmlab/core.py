"""Timestamp machinery, transaction descriptors and the versioned object store.

Everything the four protocols share lives here. Timestamps drawn from the
global counter are plain ints; working timestamps are exact ``Fraction``s so
that ``C = 0.1`` never introduces float comparison noise.
"""

from __future__ import annotations

import bisect
import enum
import sys
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

# Largest representable timestamp; stands in for +infinity on tutl/ct.
INF = sys.maxsize

UNBOUNDED = None


class ProtocolViolation(RuntimeError):
    """An internal invariant of a protocol was broken."""


class TransactionStateError(RuntimeError):
    """An operation was invoked on a descriptor in the wrong state."""


class Aborted(Exception):
    """Raised by ``read``/``try_commit`` when the transaction is aborted.

    ``op`` is ``"read"`` or ``"tryc"``; ``reason`` is a short tag such as
    ``"doomed"``, ``"no-version"`` or ``"limits"``.
    """

    def __init__(self, tx_id: int, op: str, reason: str):
        super().__init__(f"T{tx_id} aborted in {op}: {reason}")
        self.tx_id = tx_id
        self.op = op
        self.reason = reason


class Status(enum.Enum):
    LIVE = "live"
    COMMITTED = "committed"
    ABORTED = "aborted"


class GlobalCounter:
    """Atomic fetch-and-add cell. Starts at 1."""

    def __init__(self, start: int = 1):
        self._value = start
        self._lock = threading.Lock()

    @property
    def value(self) -> int:
        return self._value

    def next(self, increment: int = 1) -> int:
        return next_timestamp(self, increment)

    def set(self, value: int) -> None:
        """Force the counter forward (scripted replay only)."""
        with self._lock:
            if value < self._value:
                raise ProtocolViolation(
                    f"counter cannot move backwards ({self._value} -> {value})")
            self._value = value


def next_timestamp(counter: GlobalCounter, increment: int = 1) -> int:
    """Return the counter's current value and advance it by ``increment``."""
    if increment < 1:
        raise ValueError("increment must be >= 1")
    with counter._lock:
        value = counter._value
        counter._value = value + increment
    return value


def compute_wts(cts: int, its: int, c) -> Fraction:
    """Working timestamp ``cts + c * (cts - its)``, exact."""
    if its > cts:
        raise ProtocolViolation(f"its {its} > cts {cts}")
    return Fraction(cts) + Fraction(c) * (cts - its)


def as_fraction(c) -> Fraction:
    """Convert user-supplied C (``0.1``, ``"1/10"``, ``Fraction``) exactly.

    Floats go through ``str`` so ``0.1`` becomes ``1/10`` rather than the
    binary approximation.
    """
    if isinstance(c, float):
        return Fraction(str(c))
    return Fraction(c)


class TransactionDescriptor:
    """Per-incarnation state.

    ``id`` is the cts, which is unique. ``key`` is the ordering timestamp used
    for version selection: ``(wts, cts)`` for the WTS-based protocols and
    ``(cts, cts)`` for PKTO/SV-SFTM, so ties on wts break on cts.

    ``tltl`` and ``tutl`` refuse to move the wrong way.
    """

    __slots__ = ("id", "its", "cts", "wts", "key", "_tltl", "_tutl", "ct",
                 "status", "valid", "rset", "wset", "lock")

    def __init__(self, its: int, cts: int, wts: Fraction, key: tuple):
        if not its <= cts <= wts:
            raise ProtocolViolation(f"need its <= cts <= wts, got {its}, {cts}, {wts}")
        self.id = cts
        self.its = its
        self.cts = cts
        self.wts = wts
        self.key = key
        self._tltl = cts
        self._tutl = INF
        self.ct = INF
        self.status = Status.LIVE
        self.valid = True
        self.rset: dict[int, Any] = {}
        self.wset: dict[int, Any] = {}
        self.lock = threading.Lock()

    @property
    def tltl(self) -> int:
        return self._tltl

    @tltl.setter
    def tltl(self, value: int) -> None:
        if value < self._tltl:
            raise ProtocolViolation(f"T{self.id}: tltl decreased {self._tltl} -> {value}")
        self._tltl = value

    @property
    def tutl(self) -> int:
        return self._tutl

    @tutl.setter
    def tutl(self, value: int) -> None:
        if value > self._tutl:
            raise ProtocolViolation(f"T{self.id}: tutl increased {self._tutl} -> {value}")
        self._tutl = value

    @property
    def live(self) -> bool:
        return self.status is Status.LIVE

    def snapshot(self) -> dict:
        return {"its": self.its, "cts": self.cts, "wts": encode_ts(self.wts),
                "tltl": self.tltl, "tutl": self.tutl, "ct": self.ct}

    def __repr__(self) -> str:
        return (f"T{self.id}(its={self.its}, wts={self.wts}, {self.status.value},"
                f" [{self.tltl}, {self.tutl}])")


def encode_ts(value) -> Any:
    """JSON-friendly timestamp: ints stay ints, fractions become ``"n/d"``."""
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else str(value)
    return value


def decode_ts(value) -> Fraction:
    return Fraction(value) if isinstance(value, str) else Fraction(value)


@dataclass
class VersionTuple:
    """One committed version: ``ts`` is the creator's ordering key."""

    ts: Any
    value: Any
    readers: list = field(default_factory=list)
    vrt: int = 0
    creator: int = 0

    def add_reader(self, tx: TransactionDescriptor) -> None:
        for r in self.readers:
            if r is tx:
                return
        self.readers.append(tx)


class TObject:
    """A t-object: sorted bounded version list plus its lock."""

    __slots__ = ("oid", "versions", "lock", "capacity")

    def __init__(self, oid: int, capacity: Optional[int] = UNBOUNDED, initial=0):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be positive or UNBOUNDED")
        self.oid = oid
        self.capacity = capacity
        self.lock = threading.Lock()
        self.versions: list[VersionTuple] = [
            VersionTuple(ts=(Fraction(0), 0), value=initial, vrt=0, creator=0)]

    def __repr__(self) -> str:
        return f"TObject({self.oid}, ts={[v.ts for v in self.versions]})"


def _keys(versions):
    return [v.ts for v in versions]


def find_largest_smaller(versions: list, t) -> Optional[VersionTuple]:
    """Version with the largest ts strictly below ``t``, or None."""
    i = bisect.bisect_left(_keys(versions), t)
    return versions[i - 1] if i > 0 else None


def find_smallest_larger(versions: list, t) -> Optional[VersionTuple]:
    """Version with the smallest ts strictly above ``t``, or None."""
    i = bisect.bisect_right(_keys(versions), t)
    return versions[i] if i < len(versions) else None


def insert_version(obj: TObject, v: VersionTuple) -> None:
    """Insert in ts order, evicting the oldest version when at capacity.

    Caller holds ``obj.lock``.
    """
    keys = _keys(obj.versions)
    i = bisect.bisect_left(keys, v.ts)
    if i < len(keys) and keys[i] == v.ts:
        raise ProtocolViolation(f"duplicate version ts {v.ts} on object {obj.oid}")
    if obj.capacity is not None and len(obj.versions) >= obj.capacity:
        obj.versions.pop(0)
        i = max(i - 1, 0)
    obj.versions.insert(i, v)
