"""``stmlab`` command line: bench, check, script.

Exit codes: 0 success, 1 check failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from typing import Optional, Sequence

from . import checker
from .history import History, MalformedHistory
from .harness.script import BUILTIN, Script, ScriptError, run_script
from .harness.workload import (PRESETS, StarvationError, WorkloadConfig,
                               run_counter_workload, write_metrics_csv)
from .protocols import ProtocolKind

LEVELS = ("valid", "strict-ser", "opacity", "local-opacity")


class UsageError(Exception):
    pass


def _k(text: str) -> Optional[int]:
    if text.lower() in ("unbounded", "inf", "none"):
        return None
    k = int(text)
    if k < 1:
        raise argparse.ArgumentTypeError("k must be positive or 'unbounded'")
    return k


def _c(text: str) -> Fraction:
    try:
        c = Fraction(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad constant {text!r}") from None
    if c <= 0:
        raise argparse.ArgumentTypeError("c must be > 0")
    return c


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stmlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)
    algos = [k.value for k in ProtocolKind]

    b = sub.add_parser("bench", help="run the counter workload")
    b.add_argument("--algo", choices=algos, default="ksftm")
    b.add_argument("--threads", type=int, default=4)
    b.add_argument("--txns", type=int, default=10, help="transactions per thread")
    b.add_argument("--objects", type=int, default=5)
    b.add_argument("--ops", type=int, default=10, help="operations per transaction")
    grp = b.add_mutually_exclusive_group()
    grp.add_argument("--read-pct", type=float)
    grp.add_argument("--workload", choices=sorted(PRESETS), type=str.upper)
    b.add_argument("--k", type=_k, default=5)
    b.add_argument("--c", type=_c, default=Fraction(1, 10))
    b.add_argument("--incv", type=int, default=1)
    b.add_argument("--gc", action="store_true", help="garbage-collect (needs --k unbounded)")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--time-bound", type=float)
    b.add_argument("--out", help="metrics CSV path (default stdout)")
    b.add_argument("--history", help="record the run to this JSONL path")

    c = sub.add_parser("check", help="check a recorded history")
    c.add_argument("path")
    c.add_argument("--level", choices=LEVELS, default="local-opacity")
    c.add_argument("--json", action="store_true", help="print the report as JSON")

    s = sub.add_parser("script", help="replay a JSON script")
    s.add_argument("path", help=f"script file or built-in name ({', '.join(BUILTIN)})")
    s.add_argument("--algo", choices=algos, default="ksftm")
    s.add_argument("--record", help="write the recorded history here")
    s.add_argument("--check", choices=LEVELS, help="check the recording at this level")
    return p


def _print_report(report: dict, as_json: bool, out) -> None:
    if as_json:
        print(json.dumps(report, sort_keys=True), file=out)
        return
    verdict = "PASS" if report["pass"] else "FAIL"
    print(f"{report['level']}: {verdict}", file=out)
    for key in ("failed", "reason", "cycle", "serialization", "witness", "version_order"):
        if key in report and report[key] is not None:
            val = report[key]
            if key == "cycle":
                val = val + val[:1]
            if key in ("cycle", "witness", "serialization"):
                val = " -> ".join(f"T{t}" for t in val)
            print(f"  {key}: {val}", file=out)
    if not report["pass"] and report.get("serialization", 1) is None:
        print("  no legal serialization respects real-time order", file=out)


def cmd_bench(args, out) -> int:
    read_pct = (PRESETS[args.workload] if args.workload
                else args.read_pct if args.read_pct is not None else 90)
    if args.gc and args.k is not None:
        raise UsageError("--gc requires --k unbounded")
    try:
        cfg = WorkloadConfig(protocol=args.algo, threads=args.threads,
                             txns_per_thread=args.txns, objects=args.objects,
                             ops_per_txn=args.ops, read_pct=read_pct, k=args.k,
                             c=args.c, incv=args.incv, seed=args.seed,
                             time_bound=args.time_bound, gc_enabled=args.gc,
                             record=bool(args.history))
        metrics = run_counter_workload(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    except StarvationError as exc:
        print(f"stmlab: {exc}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_metrics_csv([metrics], fh)
    else:
        write_metrics_csv([metrics], out)
    if args.history:
        metrics.history.dump(args.history)
    return 0


def cmd_check(args, out) -> int:
    try:
        h = History.load(args.path)
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    try:
        report = checker.explain(h, args.level)
    except checker.BoundExceeded as exc:
        print(f"stmlab: bound exceeded: {exc}", file=sys.stderr)
        return 2
    _print_report(report, args.json, out)
    return 0 if report["pass"] else 1


def cmd_script(args, out) -> int:
    if args.path in BUILTIN:
        script = BUILTIN[args.path]()
    else:
        try:
            script = Script.load(args.path)
        except OSError as exc:
            raise UsageError(str(exc)) from exc
    result = run_script(script, args.algo)
    for o in result.outcomes:
        print(o, file=out)
    if args.record:
        result.history.dump(args.record)
    if args.check:
        report = checker.explain(result.history, args.check)
        _print_report(report, False, out)
        return 0 if report["pass"] else 1
    return 0


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = {"bench": cmd_bench, "check": cmd_check, "script": cmd_script}[args.cmd]
    try:
        return handler(args, out)
    except (UsageError, MalformedHistory, ScriptError) as exc:
        print(f"stmlab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
