"""Counter-application benchmark and metrics."""

from __future__ import annotations

import csv
import io
import math
import os
import random
import statistics
import threading
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from ..core import Aborted, as_fraction
from ..history import History, Recorder
from ..protocols import ProtocolKind, StmConfig, make_protocol

PRESETS = {"W1": 90, "W2": 50, "W3": 10}
MAX_RETRIES = 10_000
CSV_VERSION = "# stmlab-metrics v1"
CSV_COLUMNS = ("worst_case_ms", "mean_ms", "commits", "aborts", "read_aborts",
               "tryc_aborts", "threads", "protocol", "k", "c", "read_pct", "seed")


class StarvationError(RuntimeError):
    """An application transaction exceeded the retry ceiling."""


@dataclass(frozen=True)
class WorkloadConfig:
    protocol: ProtocolKind = ProtocolKind.KSFTM
    threads: int = 4
    txns_per_thread: int = 10
    objects: int = 5
    ops_per_txn: int = 10
    read_pct: float = 90
    k: Optional[int] = 5
    c: Fraction = Fraction(1, 10)
    incv: int = 1
    seed: int = 0
    time_bound: Optional[float] = None
    gc_enabled: bool = False
    record: bool = False
    # sleep(0) between operations so the GIL interleaves threads mid-transaction
    yield_between_ops: bool = True
    max_retries: int = MAX_RETRIES

    def __post_init__(self):
        object.__setattr__(self, "protocol", ProtocolKind.parse(self.protocol))
        object.__setattr__(self, "c", as_fraction(self.c))
        if not 0 <= self.read_pct <= 100:
            raise ValueError("read_pct must be within 0..100")
        if self.threads < 0:
            raise ValueError("threads must be >= 0")
        for name in ("txns_per_thread", "objects", "ops_per_txn", "incv", "max_retries"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.time_bound is not None and self.time_bound <= 0:
            raise ValueError("time_bound must be positive")

    @classmethod
    def preset(cls, name: str, **kw) -> "WorkloadConfig":
        return cls(read_pct=PRESETS[name.upper()], **kw)

    def stm_config(self) -> StmConfig:
        return StmConfig(k=self.k, c=self.c, incv=self.incv, gc_enabled=self.gc_enabled)

    def effective_seed(self) -> int:
        env = os.environ.get("STMLAB_SEED")
        return int(env) if env else self.seed


@dataclass
class RunMetrics:
    worst_case_commit_time: float = 0.0
    mean_commit_time: float = 0.0
    commits: int = 0
    abort_count: int = 0
    read_aborts: int = 0
    tryc_aborts: int = 0
    read_ops: int = 0
    write_ops: int = 0
    max_incarnations: int = 0
    commits_over_time: list = field(default_factory=list)
    per_thread: list = field(default_factory=list)
    threads: int = 0
    protocol: str = ""
    k: Optional[int] = None
    c: str = ""
    read_pct: float = 0
    seed: int = 0
    history: Optional[History] = field(default=None, repr=False)
    protocol_stats: dict = field(default_factory=dict, repr=False)

    @property
    def read_ratio(self) -> float:
        total = self.read_ops + self.write_ops
        return self.read_ops / total if total else 0.0

    def csv_row(self) -> dict:
        return {
            "worst_case_ms": f"{self.worst_case_commit_time * 1e3:.6f}",
            "mean_ms": f"{self.mean_commit_time * 1e3:.6f}",
            "commits": self.commits,
            "aborts": self.abort_count,
            "read_aborts": self.read_aborts,
            "tryc_aborts": self.tryc_aborts,
            "threads": self.threads,
            "protocol": self.protocol,
            "k": "unbounded" if self.k is None else self.k,
            "c": self.c,
            "read_pct": self.read_pct,
            "seed": self.seed,
        }


def write_metrics_csv(rows, fh) -> None:
    fh.write(CSV_VERSION + "\n")
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for m in rows:
        writer.writerow(m.csv_row())


def read_metrics_csv(fh) -> list[dict]:
    """Parse a metrics CSV back into typed dicts; rejects unknown schemas."""
    first = fh.readline().rstrip("\n")
    if first != CSV_VERSION:
        raise ValueError(f"line 1: expected {CSV_VERSION!r}, got {first!r}")
    reader = csv.DictReader(fh)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"line 2: expected columns {','.join(CSV_COLUMNS)}")
    out = []
    for lineno, row in enumerate(reader, 3):
        try:
            out.append({
                "worst_case_ms": float(row["worst_case_ms"]),
                "mean_ms": float(row["mean_ms"]),
                "commits": int(row["commits"]),
                "aborts": int(row["aborts"]),
                "read_aborts": int(row["read_aborts"]),
                "tryc_aborts": int(row["tryc_aborts"]),
                "threads": int(row["threads"]),
                "protocol": ProtocolKind.parse(row["protocol"]).value,
                "k": None if row["k"] == "unbounded" else int(row["k"]),
                "c": Fraction(row["c"]),
                "read_pct": float(row["read_pct"]),
                "seed": int(row["seed"]),
            })
        except (TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return out


def metrics_to_csv(rows) -> str:
    buf = io.StringIO()
    write_metrics_csv(rows, buf)
    return buf.getvalue()


# --- workers -----------------------------------------------------------------


def make_ops(rng: random.Random, cfg: WorkloadConfig) -> list[tuple[bool, int, int]]:
    """One application transaction: ``(is_read, object, value)`` triples."""
    ops = []
    for _ in range(cfg.ops_per_txn):
        is_read = rng.random() * 100 < cfg.read_pct
        obj = rng.randrange(cfg.objects)
        ops.append((is_read, obj, 0 if is_read else rng.getrandbits(63)))
    return ops


class _Worker:
    def __init__(self, idx: int, stm, cfg: WorkloadConfig, seed: int,
                 deadline: Optional[float] = None):
        self.idx = idx
        self.stm = stm
        self.cfg = cfg
        self.rng = random.Random(seed ^ idx)
        self.deadline = deadline
        self.times: list[float] = []
        self.commit_stamps: list[float] = []
        self.read_aborts = 0
        self.tryc_aborts = 0
        self.reads = 0
        self.writes = 0
        self.max_incarnations = 0
        self.error: Optional[BaseException] = None

    def run_one(self, ops) -> None:
        stm, cfg = self.stm, self.cfg
        its = None
        start = time.monotonic()
        for incarnation in range(1, cfg.max_retries + 1):
            tx = stm.begin(its)
            its = tx.its
            try:
                for is_read, obj, value in ops:
                    if is_read:
                        stm.read(tx, obj)
                    else:
                        stm.write(tx, obj, value)
                    if cfg.yield_between_ops:
                        time.sleep(0)
                stm.try_commit(tx)
            except Aborted as exc:
                if exc.op == "read":
                    self.read_aborts += 1
                else:
                    self.tryc_aborts += 1
                continue
            end = time.monotonic()
            self.times.append(end - start)
            self.commit_stamps.append(end)
            self.max_incarnations = max(self.max_incarnations, incarnation)
            return
        raise StarvationError(
            f"its {its} did not commit within {cfg.max_retries} incarnations")

    def run(self) -> None:
        try:
            n = 0
            while True:
                if self.deadline is None and n >= self.cfg.txns_per_thread:
                    return
                if self.deadline is not None and time.monotonic() >= self.deadline:
                    return
                ops = make_ops(self.rng, self.cfg)
                self.reads += sum(1 for op in ops if op[0])
                self.writes += sum(1 for op in ops if not op[0])
                self.run_one(ops)
                n += 1
        except BaseException as exc:  # surfaced by the joining thread
            self.error = exc


def _run(cfg: WorkloadConfig, deadline_from_start: Optional[float]):
    seed = cfg.effective_seed()
    recorder = Recorder() if cfg.record else None
    stm = make_protocol(cfg.protocol, cfg.objects, cfg.stm_config(), recorder)
    t0 = time.monotonic()
    deadline = None if deadline_from_start is None else t0 + deadline_from_start
    workers = [_Worker(i, stm, cfg, seed, deadline) for i in range(cfg.threads)]
    threads = [threading.Thread(target=w.run, name=f"stm-worker-{w.idx}")
               for w in workers]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for w in workers:
        if w.error is not None:
            raise w.error
    return stm, recorder, workers, t0, seed


def run_counter_workload(cfg: WorkloadConfig) -> RunMetrics:
    """Run ``cfg.threads`` workers to completion and aggregate their metrics.

    Each application transaction is retried with its first ``its`` until it
    commits; commit time spans the first begin to the final commit.
    """
    if cfg.threads < 1:
        raise ValueError("run_counter_workload needs at least one thread")
    stm, recorder, workers, t0, seed = _run(cfg, cfg.time_bound)
    return _metrics(cfg, stm, recorder, workers, seed, t0)


def _buckets(workers, t0: float, span: float, bucket: float) -> list[int]:
    n = max(1, math.ceil(span / bucket - 1e-9))
    series = [0] * n
    for w in workers:
        for stamp in w.commit_stamps:
            series[min(int((stamp - t0) // bucket), n - 1)] += 1
    return series


def _metrics(cfg, stm, recorder, workers, seed, t0, bucket=5.0) -> RunMetrics:
    times = [t for w in workers for t in w.times]
    m = RunMetrics(
        worst_case_commit_time=max(times, default=0.0),
        mean_commit_time=statistics.fmean(times) if times else 0.0,
        commits=len(times),
        read_aborts=sum(w.read_aborts for w in workers),
        tryc_aborts=sum(w.tryc_aborts for w in workers),
        read_ops=sum(w.reads for w in workers),
        write_ops=sum(w.writes for w in workers),
        max_incarnations=max((w.max_incarnations for w in workers), default=0),
        threads=cfg.threads,
        protocol=cfg.protocol.value,
        k=cfg.k,
        c=str(cfg.c),
        read_pct=cfg.read_pct,
        seed=seed,
        history=recorder.history() if recorder is not None else None,
        protocol_stats=dict(stm.stats),
    )
    last = max((s for w in workers for s in w.commit_stamps), default=t0)
    m.commits_over_time = _buckets(workers, t0, max(last - t0, 1e-9), bucket)
    m.abort_count = m.read_aborts + m.tryc_aborts
    m.per_thread = [{"thread": w.idx, "commits": len(w.times),
                     "worst_ms": max(w.times, default=0.0) * 1e3,
                     "read_aborts": w.read_aborts, "tryc_aborts": w.tryc_aborts}
                    for w in workers]
    return m


def stability_run(cfg: WorkloadConfig, bucket: float = 5.0) -> list[int]:
    """Commits per ``bucket``-second interval over ``cfg.time_bound`` seconds."""
    if cfg.time_bound is None:
        raise ValueError("stability_run needs time_bound")
    if cfg.threads == 0:
        return []
    _, _, workers, t0, _ = _run(replace(cfg, record=False), cfg.time_bound)
    return _buckets(workers, t0, cfg.time_bound, bucket)


__all__ = [
    "CSV_COLUMNS", "CSV_VERSION", "PRESETS", "RunMetrics", "StarvationError",
    "WorkloadConfig", "make_ops", "metrics_to_csv", "read_metrics_csv",
    "run_counter_workload", "stability_run", "write_metrics_csv"]
