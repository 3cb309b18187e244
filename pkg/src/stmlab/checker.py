"""Correctness checks over recorded histories.

Opacity is decided with the version-order graph: a valid history is opaque
iff some per-object order of committed versions gives an acyclic graph of
real-time (``rt``), reads-from (``rf``) and multiversion (``mv``) edges.
``brute_force_serialization`` is an independent oracle that searches
real-time-respecting permutations and replays them.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import replace
from fractions import Fraction
from itertools import permutations
from typing import Iterable, Optional, Sequence

from .history import History, HistoryEvent

ENUMERATION_CAP = 10**6
BRUTE_FORCE_CAP = 8

T0 = 0


class BoundExceeded(RuntimeError):
    """The instance is too large for exhaustive search."""


# --- history transforms ------------------------------------------------------


def completion(h: History) -> History:
    """Abort every live transaction right after its last event."""
    live = set(h.live())
    if not live:
        return h
    last = {tx: evs[-1].seq for tx, evs in h.txns.items() if tx in live}
    out: list[HistoryEvent] = []
    for e in h.events:
        out.append(e)
        if e.tx in live and e.seq == last[e.tx]:
            out.append(HistoryEvent(seq=0, tx=e.tx, kind="abort", outcome="abort"))
    return History([replace(e, seq=i) for i, e in enumerate(out)])


def _synthetic_commit(tx: int) -> HistoryEvent:
    return HistoryEvent(seq=0, tx=tx, kind="tryC", outcome="commit",
                        meta={"synthetic": True})


def subhistory_set(h: History) -> list[History]:
    """One sub-history per aborted transaction plus the committed closure."""
    h = completion(h)
    index = {id(e): i for i, e in enumerate(h.events)}
    commit_at = {tx: index[id(evs[-1])] for tx, evs in h.txns.items()
                 if evs[-1].outcome == "commit"}
    subs = []
    for tx in h.aborted():
        # writes of an aborted transaction were never exposed, so only its
        # begin and successful reads enter its sub-history
        ok = [e for e in h.txns[tx] if e.outcome == "ok" and e.kind != "write"]
        cutoff = index[id(ok[-1])]
        before = {t for t, at in commit_at.items() if at < cutoff}
        events = []
        for e in h.events:
            if e.tx in before:
                events.append(e)
            elif e.tx == tx and e.outcome == "ok" and e.kind != "write":
                events.append(e)
                if index[id(e)] == cutoff:
                    events.append(_synthetic_commit(tx))
        subs.append(History([replace(e, seq=i) for i, e in enumerate(events)]))
    if commit_at:
        subs.append(h.restrict(commit_at).renumbered())
    return subs


# --- structural helpers ------------------------------------------------------


class _Index:
    """Positions, writes and reads of a (completed) history."""

    def __init__(self, h: History):
        self.h = h
        self.txs = list(h.txns)
        self.first = {}
        self.last = {}
        self.complete = set()
        self.committed = []
        self.writes: dict[int, dict[int, object]] = defaultdict(dict)
        self.reads: list[tuple[int, int, int, int, object]] = []
        for pos, e in enumerate(h.events):
            self.first.setdefault(e.tx, pos)
            self.last[e.tx] = pos
            if e.terminal:
                self.complete.add(e.tx)
                if e.outcome == "commit":
                    self.committed.append(e.tx)
            if e.kind == "write" and e.outcome == "ok":
                self.writes[e.tx][e.obj] = e.value
            elif e.kind == "read" and e.outcome == "ok":
                self.reads.append((pos, e.tx, e.obj, e.source_ts, e.value))
        committed = set(self.committed)
        self.objects = sorted({r[2] for r in self.reads}
                              | {o for t in self.writes for o in self.writes[t]})
        # committed writers per object, T0 excluded
        self.writers: dict[int, list[int]] = {x: [] for x in self.objects}
        for t in self.committed:
            for x in self.writes.get(t, ()):
                self.writers[x].append(t)
        self.commit_pos = {t: self.last[t] for t in committed}

    def commit_meta(self, tx) -> dict:
        return self.h.txns[tx][-1].meta or {}


def is_valid(h: History) -> bool:
    """Every successful read returns a version committed before the read."""
    ix = _Index(completion(h))
    for pos, k, x, src, value in ix.reads:
        if src is None:
            return False
        if src == T0:
            if value is not None and value != 0:
                return False
            continue
        if src not in ix.commit_pos or ix.commit_pos[src] > pos:
            return False
        if x not in ix.writes.get(src, {}):
            return False
        if value is not None and ix.writes[src][x] is not None \
                and ix.writes[src][x] != value:
            return False
    return True


# --- the graph ---------------------------------------------------------------


class OpacityGraph:
    """Labelled digraph over transaction ids (T0 = 0)."""

    def __init__(self, vertices: Iterable[int] = ()):
        self.vertices = set(vertices)
        self.edges: set[tuple[int, int, str]] = set()
        self._succ: dict[int, Counter] = defaultdict(Counter)

    def add(self, u: int, v: int, label: str) -> None:
        if u == v:
            return
        self.vertices.update((u, v))
        self.edges.add((u, v, label))
        self._succ[u][v] += 1

    def remove(self, u: int, v: int, label: str) -> None:
        self.edges.discard((u, v, label))
        c = self._succ[u]
        c[v] -= 1
        if c[v] <= 0:
            del c[v]

    def successors(self, u: int):
        return self._succ[u].keys()

    def find_cycle(self) -> Optional[list[int]]:
        """A cycle as a vertex list, or None. Iterative DFS."""
        WHITE, GREY, BLACK = 0, 1, 2
        color = dict.fromkeys(self.vertices, WHITE)
        parent: dict[int, int] = {}
        for root in sorted(self.vertices):
            if color[root] != WHITE:
                continue
            color[root] = GREY
            stack = [(root, iter(sorted(self.successors(root))))]
            while stack:
                u, it = stack[-1]
                for v in it:
                    if color.get(v, WHITE) == WHITE:
                        color[v] = GREY
                        parent[v] = u
                        stack.append((v, iter(sorted(self.successors(v)))))
                        break
                    if color[v] == GREY:
                        cycle = [u]
                        while cycle[-1] != v:
                            cycle.append(parent[cycle[-1]])
                        return cycle[::-1]
                else:
                    color[u] = BLACK
                    stack.pop()
        return None

    def is_acyclic(self) -> bool:
        return self.find_cycle() is None

    def topological_order(self) -> list[int]:
        indeg = Counter({v: 0 for v in self.vertices})
        for u in self.vertices:
            for v in self.successors(u):
                indeg[v] += 1
        ready = sorted(v for v in self.vertices if indeg[v] == 0)
        order = []
        while ready:
            u = ready.pop(0)
            order.append(u)
            for v in sorted(self.successors(u)):
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
            ready.sort()
        if len(order) != len(self.vertices):
            raise ValueError("graph has a cycle")
        return order

    def labelled(self, label: str) -> set[tuple[int, int]]:
        return {(u, v) for u, v, lab in self.edges if lab == label}


def _base_edges(ix: _Index, g: OpacityGraph) -> None:
    for t in ix.txs:
        g.add(T0, t, "rt")
    ends = sorted((ix.last[t], t) for t in ix.complete)
    for tj in ix.txs:
        start = ix.first[tj]
        for end, ti in ends:
            if end >= start:
                break
            g.add(ti, tj, "rt")
    for _, k, _, src, _ in ix.reads:
        g.add(src, k, "rf")


def _mv_edges(ix: _Index, x: int, order: Sequence[int]):
    """mv edges for object ``x`` under ``order`` (T0 implicitly first)."""
    rank = {T0: -1}
    rank.update({t: i for i, t in enumerate(order)})
    out = []
    for _, k, obj, j, _ in ix.reads:
        if obj != x:
            continue
        for i in [T0] + ix.writers[x]:
            if i == j:
                continue
            if rank[i] < rank[j]:
                out.append((i, j))
            elif i != k:
                out.append((k, i))
    return out


def build_graph(h: History, vo: dict) -> OpacityGraph:
    """Opacity graph of ``completion(h)`` under version order ``vo``.

    ``vo`` maps object id to the list of committed writers of that object in
    version order; T0 is implicitly first and may be omitted.
    """
    ix = _Index(completion(h))
    g = OpacityGraph([T0, *ix.txs])
    _base_edges(ix, g)
    for x in ix.objects:
        order = [t for t in vo.get(x, ()) if t != T0]
        if sorted(order) != sorted(ix.writers[x]):
            raise ValueError(f"version order for object {x} does not match its "
                             f"committed writers {sorted(ix.writers[x])}")
        for u, v in _mv_edges(ix, x, order):
            g.add(u, v, "mv")
    return g


# --- version orders ----------------------------------------------------------


def _sort_key(ix: _Index, strategy: str):
    def key(t):
        meta = ix.commit_meta(t)
        if meta.get("synthetic"):
            # never really committed: use the last limits or key it ran with
            meta = {}
            for e in ix.h.txns[t]:
                meta.update(e.meta or {})
            meta.pop("synthetic", None)
        if strategy == "vrt" and "tltl" in meta:
            return (Fraction(meta["tltl"]), t)
        if strategy == "ts" and "vts" in meta:
            return (Fraction(meta["vts"]), t)
        if strategy == "commit":
            return (ix.commit_pos[t], t)
        return (t, t)
    return key


def version_order_by(h: History, strategy: str) -> dict:
    """Candidate version order.

    ``"vrt"`` orders versions by their creator's commit-time tltl,
    ``"ts"`` by the protocol's ordering timestamp, ``"commit"`` by commit
    position. A transaction committed only synthetically is keyed by the
    last tltl or timestamp it recorded.
    """
    if strategy not in ("vrt", "ts", "commit"):
        raise ValueError(f"unknown strategy {strategy!r}")
    ix = _Index(completion(h))
    key = _sort_key(ix, strategy)
    return {x: sorted(ws, key=key) for x, ws in ix.writers.items()}


def count_version_orders(h: History) -> int:
    ix = _Index(completion(h))
    return math.prod(math.factorial(len(ws)) for ws in ix.writers.values())


def find_version_order(h: History, candidates: Sequence[str] = (),
                       exhaustive: bool = True) -> Optional[dict]:
    """A version order with an acyclic graph, or None.

    Candidate strategies are tried first; then, if ``exhaustive``, every
    product of per-object permutations is searched with pruning. Raises
    ``BoundExceeded`` when that product exceeds ``ENUMERATION_CAP``.
    Does not check validity.
    """
    hc = completion(h)
    ix = _Index(hc)
    for strategy in candidates:
        vo = version_order_by(hc, strategy)
        if build_graph(hc, vo).is_acyclic():
            return vo
    if not exhaustive:
        return None
    total = math.prod(math.factorial(len(ws)) for ws in ix.writers.values())
    if total > ENUMERATION_CAP:
        raise BoundExceeded(f"{total} candidate version orders > {ENUMERATION_CAP}")

    g = OpacityGraph([T0, *ix.txs])
    _base_edges(ix, g)
    fixed = {}
    free = []
    for x in ix.objects:
        if len(ix.writers[x]) <= 1:
            fixed[x] = list(ix.writers[x])
            for u, v in _mv_edges(ix, x, fixed[x]):
                g.add(u, v, "mv")
        else:
            free.append(x)
    if not g.is_acyclic():
        return None
    chosen: dict = dict(fixed)

    def search(i: int) -> bool:
        if i == len(free):
            return True
        x = free[i]
        for perm in permutations(ix.writers[x]):
            edges = [(u, v) for u, v in _mv_edges(ix, x, perm) if u != v]
            added = []
            for u, v in edges:
                if (u, v, "mv") not in g.edges:
                    added.append((u, v))
                g.add(u, v, "mv")
            if g.is_acyclic():
                chosen[x] = list(perm)
                if search(i + 1):
                    return True
            for u, v in edges:
                g._succ[u][v] -= 1
                if g._succ[u][v] <= 0:
                    del g._succ[u][v]
            for u, v in added:
                g.edges.discard((u, v, "mv"))
        return False

    return chosen if search(0) else None


# --- the checks --------------------------------------------------------------


def check_opaque(h: History, candidates: Sequence[str] = (),
                 exhaustive: bool = True) -> bool:
    hc = completion(h)
    if not is_valid(hc):
        return False
    return find_version_order(hc, candidates, exhaustive) is not None


def check_local_opacity(h: History, candidates: Optional[Sequence[str]] = None,
                        exhaustive: bool = True) -> bool:
    """Every member of ``subhistory_set(h)`` is opaque.

    ``candidates`` are version-order strategies tried before enumeration
    (default: vrt, ts, commit). Pass ``exhaustive=False`` to accept only a
    candidate order, e.g. the vrt order of a KSFTM history.
    """
    if candidates is None:
        candidates = ("vrt", "ts", "commit")
    return all(check_opaque(sh, candidates, exhaustive) for sh in subhistory_set(h))


def committed_subhistory(h: History) -> History:
    hc = completion(h)
    return hc.restrict(hc.committed()).renumbered()


def check_strict_serializable(h: History, candidates: Optional[Sequence[str]] = None,
                              exhaustive: bool = True) -> bool:
    if not is_valid(h):
        return False
    if candidates is None:
        candidates = ("vrt", "ts", "commit")
    return check_opaque(committed_subhistory(h), candidates, exhaustive)


def brute_force_serialization(h: History) -> Optional[list[int]]:
    """First real-time-respecting legal serial order of ``completion(h)``.

    Transactions are tried in ascending id order at every position. Aborted
    transactions' reads must be legal but their writes are never installed.
    Returns the order without T0, or None.
    """
    hc = completion(h)
    ix = _Index(hc)
    if len(ix.txs) > BRUTE_FORCE_CAP:
        raise BoundExceeded(f"{len(ix.txs)} transactions > {BRUTE_FORCE_CAP}")
    preds = {t: set() for t in ix.txs}
    for ti in ix.complete:
        for tj in ix.txs:
            if ix.last[ti] < ix.first[tj]:
                preds[tj].add(ti)
    reads_of = defaultdict(list)
    for _, k, x, src, _ in ix.reads:
        reads_of[k].append((x, src))
    committed = set(ix.committed)
    txs = sorted(ix.txs)
    order: list[int] = []
    placed: set[int] = set()
    current: dict[int, int] = defaultdict(int)

    def search() -> bool:
        if len(order) == len(txs):
            return True
        for t in txs:
            if t in placed or not preds[t] <= placed:
                continue
            if any(current[x] != src for x, src in reads_of[t]):
                continue
            saved = {}
            if t in committed:
                for x in ix.writes.get(t, ()):
                    saved[x] = current[x]
                    current[x] = t
            order.append(t)
            placed.add(t)
            if search():
                return True
            order.pop()
            placed.discard(t)
            for x, prev in saved.items():
                current[x] = prev
        return False

    return list(order) if search() else None


def explain(h: History, level: str) -> dict:
    """Verdict plus witness or counterexample, for reports.

    ``level`` is ``valid``, ``strict-ser``, ``opacity`` or ``local-opacity``.
    """
    report: dict = {"level": level}
    if level == "valid":
        report["pass"] = is_valid(h)
        return report
    if level == "strict-ser":
        targets = [("committed", committed_subhistory(h))]
        if not is_valid(h):
            return {**report, "pass": False, "reason": "history is not valid"}
    elif level == "opacity":
        targets = [("history", completion(h))]
    elif level == "local-opacity":
        targets = [(f"sub-history {i}", sh) for i, sh in enumerate(subhistory_set(h))]
    else:
        raise ValueError(f"unknown level {level!r}")
    for name, sh in targets:
        if not is_valid(sh):
            return {**report, "pass": False, "failed": name, "reason": "not valid"}
        vo = find_version_order(sh, ("vrt", "ts", "commit"))
        if vo is None:
            cycle = build_graph(sh, version_order_by(sh, "commit")).find_cycle()
            report.update({"pass": False, "failed": name, "cycle": cycle})
            try:
                report["serialization"] = brute_force_serialization(sh)
            except BoundExceeded:
                pass
            return report
        if level != "local-opacity":
            order = build_graph(sh, vo).topological_order()
            report["witness"] = [t for t in order if t != T0]
            report["version_order"] = {str(k): v for k, v in vo.items()}
    report["pass"] = True
    return report
