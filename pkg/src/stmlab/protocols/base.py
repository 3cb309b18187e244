"""Shared plumbing for all protocols: config, begin/write/abort, locking."""

from __future__ import annotations

import enum
import os
import threading
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional

from ..core import (INF, Aborted, GlobalCounter, ProtocolViolation, Status,
                    TObject, TransactionDescriptor, TransactionStateError,
                    as_fraction, compute_wts, encode_ts)
from ..gc import LiveList, collect
from ..history import Recorder

CHECK_LOCK_ORDER = os.environ.get("STMLAB_CHECK_LOCKS", "") not in ("", "0")


class ProtocolKind(enum.Enum):
    KSFTM = "ksftm"
    PKTO = "pkto"
    SFKV = "sfkv"
    SVSFTM = "svsftm"

    @classmethod
    def parse(cls, name) -> "ProtocolKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(f"unknown protocol {name!r}; choose from "
                             f"{', '.join(k.value for k in cls)}") from None


@dataclass(frozen=True)
class StmConfig:
    """``k=None`` means unbounded versions; ``gc_enabled`` only matters then."""

    k: Optional[int] = 5
    c: Fraction = Fraction(1, 10)
    incv: int = 1
    gc_enabled: bool = False
    check_lock_order: bool = field(default=CHECK_LOCK_ORDER)

    def __post_init__(self):
        object.__setattr__(self, "c", as_fraction(self.c))
        if self.c <= 0:
            raise ValueError("c must be > 0")
        if self.incv < 1:
            raise ValueError("incv must be >= 1")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be positive or None (unbounded)")

    @property
    def collects(self) -> bool:
        return self.gc_enabled and self.k is None


class LockSet:
    """Locks taken by one operation, released together.

    With ``check`` on, every acquisition must rank strictly above the
    previous one: objects ``(0, oid)`` before descriptors ``(1, cts)``.
    """

    __slots__ = ("_held", "_check")

    def __init__(self, check: bool = False):
        self._held: list[tuple[tuple, threading.Lock]] = []
        self._check = check

    def acquire(self, lock, rank: tuple) -> None:
        if self._check and self._held and not self._held[-1][0] < rank:
            raise ProtocolViolation(
                f"lock order violated: {rank} after {self._held[-1][0]}")
        lock.acquire()
        self._held.append((rank, lock))

    def release(self) -> None:
        while self._held:
            self._held.pop()[1].release()


class Protocol:
    """Common begin/write/abort plus bookkeeping.

    Subclasses implement ``read`` and ``try_commit`` and choose the ordering
    key through ``_key``. ``read`` returns the value; aborts surface as
    :class:`Aborted`; ``try_commit`` returns None on commit.
    """

    kind: ProtocolKind

    def __init__(self, n_objects: int, config: Optional[StmConfig] = None,
                 recorder: Optional[Recorder] = None):
        if n_objects < 1:
            raise ValueError("need at least one object")
        self.config = config or StmConfig()
        self.n_objects = n_objects
        self.counter = GlobalCounter()
        self.recorder = recorder
        # Serializes timestamp draws with the events that depend on them.
        self._order = recorder.lock if recorder is not None else threading.RLock()
        self.live: Optional[LiveList] = LiveList() if self.config.collects else None
        self.objects = self._make_objects()
        self.stats: Counter = Counter()
        self._stats_lock = threading.Lock()
        self.gc_observer: Optional[Callable[[Any, int], None]] = None

    def _make_objects(self):
        return [TObject(i, self.config.k) for i in range(self.n_objects)]

    # -- helpers -------------------------------------------------------------

    def _key(self, cts: int, wts: Fraction) -> tuple:
        return (Fraction(cts), cts)

    def _bump(self, *names: str) -> None:
        with self._stats_lock:
            for n in names:
                self.stats[n] += 1

    def _emit(self, *args, **kw) -> None:
        if self.recorder is not None:
            self.recorder.emit(*args, **kw)

    def _locks(self) -> LockSet:
        return LockSet(self.config.check_lock_order)

    def _check_obj(self, x: int) -> None:
        if not 0 <= x < self.n_objects:
            raise IndexError(f"object {x} out of range 0..{self.n_objects - 1}")

    @staticmethod
    def _require_live(tx: TransactionDescriptor) -> None:
        if tx.status is not Status.LIVE:
            raise TransactionStateError(f"T{tx.id} is {tx.status.value}")

    def _fail(self, tx: TransactionDescriptor, op: str, reason: str,
              obj: Optional[int] = None):
        """Abort ``tx`` and raise. Caller holds ``tx.lock``."""
        tx.valid = False
        tx.status = Status.ABORTED
        with self._order:
            self._emit(tx.id, "read" if op == "read" else "tryC", obj=obj,
                       outcome="abort", meta={"reason": reason})
        if self.live is not None:
            self.live.remove(tx.id)
        self._bump("aborts", f"{op}_aborts", f"abort:{reason}")
        raise Aborted(tx.id, op, reason)

    def _finish_commit(self, tx: TransactionDescriptor, order_ts) -> None:
        """Mark committed and log. Caller holds ``self._order`` and tx.lock."""
        tx.status = Status.COMMITTED
        meta = tx.snapshot()
        meta["vts"] = encode_ts(order_ts)
        self._emit(tx.id, "tryC", outcome="commit", meta=meta)
        if self.live is not None:
            self.live.remove(tx.id)
        self._bump("commits")

    # -- operations shared by every protocol -----------------------------------

    def begin(self, its: Optional[int] = None, *, cts: Optional[int] = None,
              wts=None) -> TransactionDescriptor:
        """Start a transaction, or a new incarnation when ``its`` is given.

        ``cts``/``wts`` pin timestamps for scripted replays; ``cts`` moves the
        counter forward to that value first.
        """
        with self._order:
            if cts is not None:
                self.counter.set(cts)
            if its is not None and its >= self.counter.value:
                raise TransactionStateError(
                    f"its {its} is not older than the counter ({self.counter.value})")
            if self.live is not None:
                cts = self.live.register(self.counter.next)
            else:
                cts = self.counter.next()
            first = its is None
            its = cts if first else its
            if wts is None:
                wts = Fraction(cts) if first else compute_wts(cts, its, self.config.c)
            else:
                wts = as_fraction(wts)
            tx = TransactionDescriptor(its, cts, wts, self._key(cts, wts))
            meta = tx.snapshot()
            meta["vts"] = encode_ts(tx.key[0])
            self._emit(tx.id, "begin", meta=meta)
        return tx

    def write(self, tx: TransactionDescriptor, x: int, value) -> None:
        self._require_live(tx)
        self._check_obj(x)
        tx.wset[x] = value
        self._emit(tx.id, "write", obj=x, value=value)

    def abort(self, tx: TransactionDescriptor) -> None:
        """Explicit abort by the application."""
        self._require_live(tx)
        with tx.lock:
            tx.valid = False
            tx.status = Status.ABORTED
            with self._order:
                self._emit(tx.id, "abort", outcome="abort")
        if self.live is not None:
            self.live.remove(tx.id)
        self._bump("aborts", "explicit_aborts")

    def read(self, tx: TransactionDescriptor, x: int):
        raise NotImplementedError

    def try_commit(self, tx: TransactionDescriptor) -> None:
        raise NotImplementedError

    def _quick_valid_check(self, tx: TransactionDescriptor) -> None:
        with tx.lock:
            if not tx.valid:
                self._fail(tx, "tryc", "doomed")

    def _collect(self, objs) -> None:
        """Prune versions after insertion. Caller holds the object locks."""
        if self.live is None:
            return
        snapshot = self.live.min_cts()
        for obj in objs:
            removed = collect(obj, snapshot)
            if removed:
                self._bump_by("gc_removed", removed)
            if self.gc_observer is not None:
                self.gc_observer(obj, snapshot)

    def _bump_by(self, name: str, n: int) -> None:
        with self._stats_lock:
            self.stats[name] += n

    def __repr__(self) -> str:
        return f"{type(self).__name__}(objects={self.n_objects}, {self.config})"


def is_doomed(tk: TransactionDescriptor, abl: dict) -> bool:
    """Already aborted, flagged for abort, or about to be flagged by us."""
    return not tk.valid or tk.status is Status.ABORTED or tk.id in abl


__all__ = ["ProtocolKind", "StmConfig", "Protocol", "LockSet", "is_doomed", "INF"]
