import json
import random
import threading

import pytest
from hypothesis import given, settings, strategies as st

from stmlab.history import (FIELDS, History, HistoryBuilder, HistoryEvent,
                            MalformedHistory, Recorder)

from histgen import random_valid_history


def small():
    return (HistoryBuilder().begin(1).read(1, "x", 0, 0).write(1, "x", 5).commit(1)
            .begin(2).read(2, "x", 1, 5).tryc_abort(2)
            .begin(3).write(3, "y", 1).build())


def test_status_partition():
    h = small()
    assert h.committed() == [1]
    assert h.aborted() == [2]
    assert h.live() == [3]


def test_field_order_on_disk():
    line = small().dumps().splitlines()[0]
    assert list(json.loads(line)) == list(FIELDS)


def test_round_trip(tmp_path):
    h = small()
    p = tmp_path / "h.jsonl"
    h.dump(p)
    assert History.load(p) == h


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_round_trip_random(seed):
    h = random_valid_history(random.Random(seed))
    assert History.loads(h.dumps()) == h


def test_blank_lines_ignored():
    text = small().dumps().replace("\n", "\n\n")
    assert History.loads(text) == small()


@pytest.mark.parametrize("mutate,msg", [
    (lambda d: d.pop("meta"), "line 2"),
    (lambda d: d.update(kind="commit"), "unknown kind"),
    (lambda d: d.update(outcome="maybe"), "unknown outcome"),
])
def test_malformed_lines_report_line_number(mutate, msg):
    lines = small().dumps().splitlines()
    d = json.loads(lines[1])
    mutate(d)
    lines[1] = json.dumps(d)
    with pytest.raises(MalformedHistory, match=msg):
        History.loads("\n".join(lines))


def test_not_json():
    with pytest.raises(MalformedHistory, match="line 1"):
        History.loads("{oops")


def test_must_begin_first():
    with pytest.raises(MalformedHistory, match="does not start with begin"):
        History([HistoryEvent(0, 1, "read", 0, 0, 0)])


def test_no_events_after_termination():
    with pytest.raises(MalformedHistory, match="after termination"):
        HistoryBuilder().begin(1).commit(1).write(1, "x").build()


def test_double_begin():
    with pytest.raises(MalformedHistory, match="begins twice"):
        HistoryBuilder().begin(1).begin(1).build()


def test_t0_forbidden():
    with pytest.raises(MalformedHistory, match="T0"):
        HistoryBuilder().begin(0).build()


def test_seq_must_increase():
    evs = [HistoryEvent(1, 1, "begin"), HistoryEvent(1, 2, "begin")]
    with pytest.raises(MalformedHistory, match="seq"):
        History(evs)


def test_restrict_and_renumber():
    h = small().restrict([2]).renumbered()
    assert [e.seq for e in h] == [0, 1, 2]
    assert {e.tx for e in h} == {2}


def test_builder_names_objects_in_order():
    h = HistoryBuilder().begin(1).write(1, "b").write(1, "a").write(1, "b").build()
    assert [e.obj for e in h if e.kind == "write"] == [0, 1, 0]


def test_recorder_is_thread_safe():
    rec = Recorder()

    def work(tx):
        rec.emit(tx, "begin")
        for i in range(100):
            rec.emit(tx, "write", obj=0, value=i)

    threads = [threading.Thread(target=work, args=(t,)) for t in range(1, 9)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    h = rec.history()
    assert len(h) == 8 * 101
    assert [e.seq for e in h] == list(range(len(h)))
