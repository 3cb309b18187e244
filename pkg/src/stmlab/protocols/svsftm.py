"""Single-version starvation-free STM with forward validation."""

from __future__ import annotations

import threading

from ..core import TransactionDescriptor, next_timestamp
from .base import Protocol, ProtocolKind


class SvObject:
    """One current value, its writer's cts, and who has read it since."""

    __slots__ = ("oid", "value", "writer", "readers", "lock")

    def __init__(self, oid: int, value=0):
        self.oid = oid
        self.value = value
        self.writer = 0
        self.readers: list[TransactionDescriptor] = []
        self.lock = threading.Lock()

    def __repr__(self) -> str:
        return f"SvObject({self.oid}, value={self.value!r}, writer=T{self.writer})"


class SvSftm(Protocol):
    """A committer must hold the lowest its among the live transactions that
    read what it overwrites; it then dooms all of them. Otherwise it aborts.
    """

    kind = ProtocolKind.SVSFTM

    def _make_objects(self):
        return [SvObject(i) for i in range(self.n_objects)]

    def read(self, tx: TransactionDescriptor, x: int):
        self._require_live(tx)
        if x in tx.wset:
            return tx.wset[x]
        if x in tx.rset:
            return tx.rset[x]
        self._check_obj(x)
        obj = self.objects[x]
        held = self._locks()
        try:
            held.acquire(obj.lock, (0, x))
            held.acquire(tx.lock, (1, tx.cts))
            if not tx.valid:
                self._fail(tx, "read", "doomed", x)
            if all(r is not tx for r in obj.readers):
                obj.readers.append(tx)
            tx.rset[x] = obj.value
            self._emit(tx.id, "read", obj=x, value=obj.value, source_ts=obj.writer)
            return obj.value
        finally:
            held.release()

    def try_commit(self, tx: TransactionDescriptor) -> None:
        self._require_live(tx)
        self._quick_valid_check(tx)
        held = self._locks()
        try:
            tset: dict[int, TransactionDescriptor] = {tx.id: tx}
            for x in sorted(tx.wset):
                obj = self.objects[x]
                held.acquire(obj.lock, (0, x))
                for r in obj.readers:
                    tset[r.id] = r
            for cts in sorted(tset):
                held.acquire(tset[cts].lock, (1, cts))
            if not tx.valid:
                self._fail(tx, "tryc", "doomed")
            contenders = [t for t in tset.values() if t.live and t.valid]
            if min(t.its for t in contenders) != tx.its:
                self._fail(tx, "tryc", "lower-its-reader")
            with self._order:
                tx.ct = next_timestamp(self.counter, self.config.incv)
                for t in contenders:
                    if t is not tx:
                        t.valid = False
                for x in sorted(tx.wset):
                    obj = self.objects[x]
                    obj.value = tx.wset[x]
                    obj.writer = tx.id
                    obj.readers.clear()
                self._finish_commit(tx, tx.cts)
        finally:
            held.release()
