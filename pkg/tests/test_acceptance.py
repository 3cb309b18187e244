"""Acceptance criteria, one check per criterion.

Each check returns ``(ok, detail)``; the pytest wrappers print one
``PASS``/``FAIL`` line per criterion and then assert. Run standalone with
``python tests/test_acceptance.py`` for just the summary lines.
"""

import io
import random
import sys
import threading
import time
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stmlab.checker import (brute_force_serialization, check_local_opacity,  # noqa: E402
                            check_opaque, check_strict_serializable,
                            committed_subhistory)
from stmlab.core import decode_ts  # noqa: E402
from stmlab.harness import (PRESETS, WorkloadConfig, h1_script,  # noqa: E402
                            read_metrics_csv, run_adversarial, run_counter_workload,
                            run_script, t26_script, write_metrics_csv)
from stmlab.harness.workload import _Worker  # noqa: E402
from stmlab.protocols import make_protocol  # noqa: E402

from histgen import random_valid_history  # noqa: E402
from invariants import K_MODES, fuzz_config, limit_violations  # noqa: E402

FUZZ_RUNS = 100
SAFE_PROTOCOLS = ("ksftm", "pkto", "svsftm")


@lru_cache(maxsize=None)
def fuzz_histories(protocol):
    """100 recorded runs, cycling K over 1, 5 and unbounded with GC."""
    out = []
    for seed in range(FUZZ_RUNS):
        k, gc = K_MODES[seed % len(K_MODES)]
        m = run_counter_workload(fuzz_config(protocol, seed, k=k, gc=gc))
        out.append((seed, k, m.history))
    return out


# --- criteria ----------------------------------------------------------------


def criterion_1():
    t0 = time.monotonic()
    failures = []
    for protocol in SAFE_PROTOCOLS:
        for seed, k, h in fuzz_histories(protocol):
            if not check_local_opacity(h):
                failures.append(f"{protocol}/seed {seed}/k {k}")
            elif protocol == "ksftm" and not check_local_opacity(
                    h, candidates=("vrt",), exhaustive=False):
                failures.append(f"ksftm vrt order/seed {seed}/k {k}")
    elapsed = time.monotonic() - t0
    ok = not failures and elapsed < 300
    return ok, (f"{3 * FUZZ_RUNS} runs, {len(failures)} failing "
                f"{failures[:3]}, {elapsed:.1f}s")


def criterion_2():
    t0 = time.monotonic()
    sfkv = run_script(h1_script(), "sfkv")
    h = sfkv.history
    all_committed = all(sfkv.status(a) == "committed" for a in ("T1", "T2", "T3"))
    not_ser = not check_strict_serializable(h)
    no_order = brute_force_serialization(h) is None
    ks = run_script(h1_script(), "ksftm")
    t3_aborted = ks.status("T3") == "aborted"
    committed_ok = check_opaque(committed_subhistory(ks.history))
    elapsed = time.monotonic() - t0
    ok = all_committed and not_ser and no_order and t3_aborted and committed_ok \
        and elapsed < 1
    return ok, (f"sfkv committed={all_committed} strict-ser={not not_ser} "
                f"serialization={'none' if no_order else 'found'}; ksftm T3 "
                f"aborted={t3_aborted} committed part opaque={committed_ok}; "
                f"{elapsed:.2f}s")


def criterion_3():
    t0 = time.monotonic()
    rng = random.Random(3)
    disagree = opaque = 0
    for _ in range(500):
        h = random_valid_history(rng, max_txns=6, max_committed=6)
        ours = check_opaque(h)
        oracle = brute_force_serialization(h) is not None
        disagree += ours != oracle
        opaque += ours
    elapsed = time.monotonic() - t0
    return disagree == 0 and elapsed < 120, (
        f"500 histories, {opaque} opaque, {disagree} disagreements, {elapsed:.1f}s")


def criterion_4():
    t0 = time.monotonic()
    pk = run_script(t26_script(3), "pkto")
    results = [o.result for o in pk.outcomes_of("V", "tryc")]
    streak = best = 0
    for r in results:
        streak = streak + 1 if r == "abort" else 0
        best = max(best, streak)
    worst = 0
    missed = []
    for seed in range(50):
        out = run_adversarial("ksftm", seed, max_incarnations=20)
        if not out.committed:
            missed.append(seed)
        worst = max(worst, out.incarnations)
    elapsed = time.monotonic() - t0
    ok = best >= 3 and not missed and worst <= 20 and elapsed < 30
    return ok, (f"pkto victim aborted {best} consecutive incarnations; ksftm "
                f"committed on {50 - len(missed)}/50 seeds, worst {worst} "
                f"incarnations; {elapsed:.1f}s")


def criterion_5():
    bad = []
    for seed, _, h in fuzz_histories("ksftm"):
        bad += [f"seed {seed}: {v}" for v in limit_violations(h)]
    for protocol in ("pkto", "svsftm"):
        for seed, _, h in fuzz_histories(protocol):
            for tx, evs in h.txns.items():
                m = evs[0].meta
                if not decode_ts(m["wts"]) >= m["cts"] >= m["its"]:
                    bad.append(f"{protocol} seed {seed} T{tx}")
    return not bad, f"{len(bad)} violations {bad[:3]}"


def criterion_6():
    """Literal pruning check plus the safety check, over 50 GC runs."""
    literal = []
    gc_aborts = 0
    removed = 0
    for seed in range(50):
        protocol = ("ksftm", "pkto")[seed % 2]
        cfg = fuzz_config(protocol, seed, k=None, gc=True, record=False)
        stm = make_protocol(protocol, cfg.objects, cfg.stm_config())

        def observe(obj, snapshot, seed=seed):
            if snapshot is None:
                return
            for v in obj.versions[:-1]:
                if v.ts[0] < snapshot:
                    literal.append((seed, obj.oid, v.ts[1], snapshot))

        stm.gc_observer = observe
        _drive(stm, cfg)
        gc_aborts += stm.stats.get("abort:no-version", 0)
        removed += stm.stats.get("gc_removed", 0)
    ok = not literal and gc_aborts == 0
    return ok, (f"{removed} versions collected; {len(literal)} post-collect "
                f"states keep a non-latest version below the snapshot "
                f"(the newest one below it is retained for the oldest live "
                f"reader); {gc_aborts} no-version aborts")


def _drive(stm, cfg):
    """Run cfg's workload against an existing protocol instance."""
    workers = [_Worker(i, stm, cfg, cfg.seed) for i in range(cfg.threads)]
    threads = [threading.Thread(target=w.run) for w in workers]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for w in workers:
        if w.error is not None:
            raise w.error


def criterion_7():
    notes = []
    ok = True
    for name, pct in sorted(PRESETS.items()):
        m = run_counter_workload(WorkloadConfig.preset(
            name, threads=1, txns_per_thread=1000, ops_per_txn=10, seed=7))
        total = m.read_ops + m.write_ops
        ratio = 100 * m.read_ratio
        good = total >= 10_000 and abs(ratio - pct) <= 2
        ok &= good
        notes.append(f"{name} {ratio:.2f}%")
    aborts = {}
    for protocol in ("ksftm", "pkto", "sfkv", "svsftm"):
        m = run_counter_workload(WorkloadConfig(protocol=protocol, threads=1,
                                                txns_per_thread=200, read_pct=50))
        aborts[protocol] = m.abort_count
    ok &= not any(aborts.values())
    rows = [run_counter_workload(WorkloadConfig(threads=2, txns_per_thread=5, k=k,
                                                seed=s))
            for s, k in ((1, 5), (2, None))]
    buf = io.StringIO()
    write_metrics_csv(rows, buf)
    back = read_metrics_csv(io.StringIO(buf.getvalue()))
    buf2 = io.StringIO()
    write_metrics_csv(rows, buf2)
    csv_ok = (buf.getvalue() == buf2.getvalue()
              and [(r["commits"], r["k"], r["seed"]) for r in back]
              == [(m.commits, m.k, m.seed) for m in rows])
    ok &= csv_ok
    return ok, (f"read ratios {', '.join(notes)}; solo aborts {aborts}; "
                f"csv round-trip {'ok' if csv_ok else 'mismatch'}")


def trend_report():
    """KSFTM vs SVSFTM worst-case commit time on W3, 16 threads, 10 seeds."""
    wins = 0
    pairs = []
    for seed in range(10):
        worst = {}
        for protocol in ("ksftm", "svsftm"):
            m = run_counter_workload(WorkloadConfig.preset(
                "W3", protocol=protocol, threads=16, txns_per_thread=100,
                objects=10, ops_per_txn=10, seed=seed))
            worst[protocol] = m.worst_case_commit_time * 1e3
        wins += worst["ksftm"] <= worst["svsftm"]
        pairs.append(f"{worst['ksftm']:.1f}/{worst['svsftm']:.1f}")
    return wins, pairs


CRITERIA = {
    1: ("safety fuzz", criterion_1),
    2: ("H1 negative reproduction", criterion_2),
    3: ("oracle equivalence", criterion_3),
    4: ("starvation reproduction and cure", criterion_4),
    5: ("limit-interval invariants", criterion_5),
    6: ("GC correctness", criterion_6),
    7: ("harness fidelity", criterion_7),
}


def line(n, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {n} ({CRITERIA[n][0]}): {detail}"


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, detail = CRITERIA[n][1]()
    with capsys.disabled():
        print("\n" + line(n, ok, detail))
    assert ok, detail


def test_trend_report_informational(capsys):
    wins, pairs = trend_report()
    with capsys.disabled():
        print(f"\nINFO trend: ksftm worst-case <= svsftm in {wins}/10 W3 runs "
              f"(ms ksftm/svsftm: {' '.join(pairs)})")


if __name__ == "__main__":
    failed = 0
    for n, (_, fn) in sorted(CRITERIA.items()):
        ok, detail = fn()
        failed += not ok
        print(line(n, ok, detail), flush=True)
    wins, pairs = trend_report()
    print(f"INFO trend: ksftm worst-case <= svsftm in {wins}/10 W3 runs")
    sys.exit(1 if failed else 0)
