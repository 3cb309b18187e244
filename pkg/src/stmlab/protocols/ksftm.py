"""Starvation-free K-version STM with real-time limit intervals."""

from __future__ import annotations

from fractions import Fraction

from ..core import (TransactionDescriptor, VersionTuple, find_largest_smaller,
                    find_smallest_larger, insert_version, next_timestamp)
from .base import Protocol, ProtocolKind, is_doomed


class Ksftm(Protocol):
    """Versions are ordered by ``(wts, cts)``; each carries a ``vrt`` stamp.

    A transaction keeps ``[tltl, tutl]``, the window of real-time positions
    it may still take. Reads and commits shrink it; crossing means abort.
    """

    kind = ProtocolKind.KSFTM

    def _key(self, cts: int, wts: Fraction) -> tuple:
        return (wts, cts)

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
            nxt = find_smallest_larger(obj.versions, tx.key)
            if nxt is not None:
                tx.tutl = min(tx.tutl, nxt.vrt - 1)
            tx.tltl = max(tx.tltl, cur.vrt + 1)
            if tx.tltl > tx.tutl:
                self._fail(tx, "read", "limits", x)
            cur.add_reader(tx)
            tx.rset[x] = cur.value
            self._emit(tx.id, "read", obj=x, value=cur.value, source_ts=cur.creator,
                       meta={"tltl": tx.tltl, "tutl": tx.tutl})
            return cur.value
        finally:
            held.release()

    def try_commit(self, tx: TransactionDescriptor) -> None:
        self._require_live(tx)
        self._quick_valid_check(tx)
        held = self._locks()
        try:
            pvl, nvl = [], []
            all_rl: dict[int, TransactionDescriptor] = {}
            lrl: dict[int, TransactionDescriptor] = {}
            srl: dict[int, TransactionDescriptor] = {}
            for x in sorted(tx.wset):
                obj = self.objects[x]
                held.acquire(obj.lock, (0, x))
                prev = find_largest_smaller(obj.versions, tx.key)
                if prev is None:
                    held.acquire(tx.lock, (1, tx.cts))
                    self._fail(tx, "tryc", "no-version")
                pvl.append(prev)
                for r in prev.readers:
                    if r is tx:
                        continue
                    all_rl[r.id] = r
                    (lrl if r.key > tx.key else srl)[r.id] = r
                nxt = find_smallest_larger(obj.versions, tx.key)
                if nxt is not None:
                    nvl.append(nxt)

            relevant = dict(all_rl)
            relevant[tx.id] = tx
            for cts in sorted(relevant):
                held.acquire(relevant[cts].lock, (1, cts))
            if not tx.valid:
                self._fail(tx, "tryc", "doomed")

            abl: dict[int, TransactionDescriptor] = {}
            for tk in sorted(lrl.values(), key=lambda t: t.cts):
                if is_doomed(tk, abl):
                    continue
                if tx.its < tk.its and tk.live:
                    abl[tk.id] = tk
                else:
                    self._fail(tx, "tryc", "larger-reader")

            for v in pvl:
                tx.tltl = max(tx.tltl, v.vrt + 1)
            for v in nvl:
                tx.tutl = min(tx.tutl, v.vrt - 1)

            with self._order:
                tx.ct = next_timestamp(self.counter, self.config.incv)
                tx.tutl = min(tx.tutl, tx.ct)
                if tx.tltl > tx.tutl:
                    self._fail(tx, "tryc", "limits")

                for tk in sorted(srl.values(), key=lambda t: t.cts):
                    if is_doomed(tk, abl) or tk.tltl < tx.tutl:
                        continue
                    if tk.live and tx.its < tk.its:
                        abl[tk.id] = tk
                    else:
                        self._fail(tx, "tryc", "smaller-reader")

                # past this point tx cannot abort
                tx.tltl = tx.tutl
                for tk in srl.values():
                    if not is_doomed(tk, abl):
                        tk.tutl = min(tk.tutl, tx.tltl - 1)
                for tk in abl.values():
                    tk.valid = False
                written = []
                for x in sorted(tx.wset):
                    obj = self.objects[x]
                    insert_version(obj, VersionTuple(ts=tx.key, value=tx.wset[x],
                                                     vrt=tx.tltl, creator=tx.id))
                    written.append(obj)
                self._collect(written)
                self._finish_commit(tx, tx.wts)
        finally:
            held.release()
