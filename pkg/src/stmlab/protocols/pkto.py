"""Priority K-version timestamp ordering, and its wts-based variant SFKV."""

from __future__ import annotations

from fractions import Fraction

from ..core import (ProtocolViolation, TransactionDescriptor, VersionTuple,
                    find_largest_smaller, insert_version, next_timestamp)
from .base import Protocol, ProtocolKind, is_doomed


class Pkto(Protocol):
    """MVTO over K versions; conflicts are settled by the lower ``its``.

    Versions are keyed by cts. Safe (strictly serializable) but a low-its
    transaction can be aborted forever by committed higher-cts readers.
    """

    kind = ProtocolKind.PKTO

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
            cur = find_largest_smaller(obj.versions, tx.key)
            if cur is None:
                self._fail(tx, "read", "no-version", x)
            cur.add_reader(tx)
            tx.rset[x] = cur.value
            self._emit(tx.id, "read", obj=x, value=cur.value, source_ts=cur.creator)
            return cur.value
        finally:
            held.release()

    def try_commit(self, tx: TransactionDescriptor) -> None:
        self._require_live(tx)
        self._quick_valid_check(tx)
        held = self._locks()
        try:
            lrl: dict[int, TransactionDescriptor] = {}
            for x in sorted(tx.wset):
                obj = self.objects[x]
                held.acquire(obj.lock, (0, x))
                prev = find_largest_smaller(obj.versions, tx.key)
                if prev is None:
                    held.acquire(tx.lock, (1, tx.cts))
                    self._fail(tx, "tryc", "no-version")
                for r in prev.readers:
                    if r is not tx and r.key > tx.key:
                        lrl[r.id] = r

            relevant = dict(lrl)
            relevant[tx.id] = tx
            for cts in sorted(relevant):
                held.acquire(relevant[cts].lock, (1, cts))
            if not tx.valid:
                self._fail(tx, "tryc", "doomed")

            abl: dict[int, TransactionDescriptor] = {}
            for tk in sorted(lrl.values(), key=lambda t: t.cts):
                if is_doomed(tk, abl):
                    continue
                if not tk.live:
                    self._fail(tx, "tryc", "larger-reader")
                if tx.its == tk.its:
                    raise ProtocolViolation(
                        f"T{tx.id} and T{tk.id} are live incarnations of its {tx.its}")
                if tx.its < tk.its:
                    abl[tk.id] = tk
                else:
                    self._fail(tx, "tryc", "larger-reader")

            with self._order:
                tx.ct = next_timestamp(self.counter, self.config.incv)
                for tk in abl.values():
                    tk.valid = False
                written = []
                for x in sorted(tx.wset):
                    obj = self.objects[x]
                    insert_version(obj, VersionTuple(ts=tx.key, value=tx.wset[x],
                                                     vrt=tx.ct, creator=tx.id))
                    written.append(obj)
                self._collect(written)
                self._finish_commit(tx, tx.key[0])
        finally:
            held.release()


class Sfkv(Pkto):
    """PKTO with wts in place of cts everywhere.

    Starvation-free, but a transaction can be serialized before one that
    committed before it began, so strict serializability is lost.
    """

    kind = ProtocolKind.SFKV

    def _key(self, cts: int, wts: Fraction) -> tuple:
        return (wts, cts)
