from fractions import Fraction

import pytest
from hypothesis import given, strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, rule

from stmlab.core import (Aborted, TObject, VersionTuple, find_largest_smaller)
from stmlab.gc import LiveList, collect, min_live_cts
from stmlab.protocols import Ksftm, Pkto, StmConfig
from stmlab.protocols import base as protocol_base

from invariants import fuzz_run


def obj(*ts, k=None):
    o = TObject(0, k)
    o.versions = [VersionTuple((Fraction(t), t), t, creator=t) for t in ts]
    return o


def ts_of(o):
    return [v.ts[1] for v in o.versions]


# --- LiveList ----------------------------------------------------------------


def test_min_live_cts_examples():
    live = LiveList()
    assert min_live_cts(live) is None
    live.add(12, 12)
    live.add(7, 7)
    assert min_live_cts(live) == 7
    live.remove(7)
    assert min_live_cts(live) == 12
    assert 12 in live and 7 not in live and len(live) == 1


def test_live_list_rejects_double_add_and_remove():
    live = LiveList()
    live.add(1, 1)
    with pytest.raises(ValueError):
        live.add(1, 1)
    live.remove(1)
    with pytest.raises(ValueError):
        live.remove(1)


def test_register_draws_under_the_lock():
    live = LiveList()
    seq = iter([4, 9])
    assert live.register(lambda: next(seq)) == 4
    assert live.register(lambda: next(seq)) == 9
    assert live.min_cts() == 4


class LiveListModel(RuleBasedStateMachine):
    def __init__(self):
        super().__init__()
        self.live = LiveList()
        self.model = set()
        self.next = 1

    @rule()
    def add(self):
        self.live.add(self.next, self.next)
        self.model.add(self.next)
        self.next += 1

    @rule(data=st.data())
    def remove(self, data):
        if self.model:
            t = data.draw(st.sampled_from(sorted(self.model)))
            self.live.remove(t)
            self.model.discard(t)

    @invariant()
    def same_min(self):
        assert self.live.min_cts() == (min(self.model) if self.model else None)
        assert len(self.live) == len(self.model)


TestLiveListModel = LiveListModel.TestCase


# --- collect -------------------------------------------------------------------


def test_collect_keeps_newest_version_below_snapshot():
    o = obj(5, 12, 20)
    assert collect(o, 15) == 1
    assert ts_of(o) == [12, 20]


def test_collect_below_everything_deletes_nothing():
    o = obj(5, 12, 20)
    assert collect(o, 3) == 0
    assert ts_of(o) == [5, 12, 20]


def test_collect_latest_survives():
    o = obj(5)
    assert collect(o, 100) == 0
    assert ts_of(o) == [5]
    o = obj(5, 12, 20)
    assert collect(o, 100) == 2
    assert ts_of(o) == [20]


def test_collect_without_live_transactions_is_noop():
    o = obj(5, 12)
    assert collect(o, None) == 0


def test_collect_rejects_bounded_objects():
    with pytest.raises(ValueError):
        collect(obj(5, k=3), 10)


@given(st.lists(st.integers(0, 100), unique=True, min_size=1),
       st.integers(0, 120), st.integers(0, 150))
def test_collect_preserves_reads_at_or_above_snapshot(ts, snapshot, probe):
    o = obj(*sorted(ts))
    t = max(snapshot, probe)
    before = find_largest_smaller(o.versions, (Fraction(t), t))
    collect(o, snapshot)
    after = find_largest_smaller(o.versions, (Fraction(t), t))
    assert before is after
    left = ts_of(o)
    assert left == sorted(left) and left
    assert sum(1 for x in left[:-1] if x < snapshot) <= 1


# --- literal pruning is unsafe -------------------------------------------------


def literal_collect(o, min_cts):
    """Delete every non-latest version below ``min_cts``."""
    if min_cts is None:
        return 0
    doomed = [v for v in o.versions[:-1] if v.ts[0] < min_cts]
    for v in doomed:
        o.versions.remove(v)
    return len(doomed)


@pytest.mark.parametrize("cls", [Ksftm, Pkto])
def test_literal_pruning_aborts_the_oldest_live_reader(cls, monkeypatch):
    monkeypatch.setattr(protocol_base, "collect", literal_collect)
    p = cls(1, StmConfig(k=None, gc_enabled=True))
    oldest = p.begin()
    for v in (1, 2):
        w = p.begin()
        p.write(w, 0, v)
        p.try_commit(w)
    assert p.live.min_cts() == oldest.cts
    with pytest.raises(Aborted) as exc:
        p.read(oldest, 0)
    assert exc.value.reason == "no-version"


@pytest.mark.parametrize("cls", [Ksftm, Pkto])
def test_safe_pruning_serves_the_oldest_live_reader(cls):
    p = cls(1, StmConfig(k=None, gc_enabled=True))
    oldest = p.begin()
    for v in (1, 2):
        w = p.begin()
        p.write(w, 0, v)
        p.try_commit(w)
    assert p.read(oldest, 0) == 0
    assert p.stats["gc_removed"] == 0
    w = p.begin()
    p.write(w, 0, 3)
    p.abort(oldest)
    p.try_commit(w)
    assert p.stats["gc_removed"] >= 1


# --- under load ----------------------------------------------------------------


@pytest.mark.parametrize("kind", ["ksftm", "pkto"])
@pytest.mark.parametrize("seed", range(4))
def test_gc_fuzz_no_version_aborts(kind, seed):
    m = fuzz_run(kind, seed, k=None, gc=True)
    assert m.protocol_stats.get("abort:no-version", 0) == 0
    assert m.protocol_stats.get("gc_removed", 0) > 0
