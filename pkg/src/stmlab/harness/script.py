"""Deterministic single-threaded replay of hand-written interleavings.

A script is JSON::

    {"objects": ["x", "y"],
     "config": {"k": 5, "c": "1/10"},
     "steps": [{"actor": "T1", "action": "begin", "cts": 50},
               {"actor": "T1", "action": "read", "obj": "x"}, ...]}

Actors name application transactions. ``begin`` on an actor whose last
incarnation aborted starts a new incarnation with the same its. Optional
step fields: ``its``/``cts``/``wts`` pin timestamps, ``its_of`` borrows
another actor's its, ``counter`` moves the global counter forward before
the step runs. Steps on an aborted incarnation are reported as skipped.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

from ..core import Aborted, Status, TransactionDescriptor
from ..history import History, Recorder
from ..protocols import Protocol, StmConfig, make_protocol

ACTIONS = ("begin", "read", "write", "tryc", "abort")
_STEP_FIELDS = {"actor", "action", "obj", "value", "its", "cts", "wts", "its_of",
                "counter"}


class ScriptError(ValueError):
    """Malformed script or a step on a committed/unknown actor."""


@dataclass(frozen=True)
class Step:
    actor: str
    action: str
    obj: Any = None
    value: Any = None
    its: Optional[int] = None
    cts: Optional[int] = None
    wts: Any = None
    its_of: Optional[str] = None
    counter: Optional[int] = None

    @classmethod
    def from_dict(cls, d: dict) -> "Step":
        extra = set(d) - _STEP_FIELDS
        if extra:
            raise ScriptError(f"unknown step fields {sorted(extra)}")
        if "actor" not in d or "action" not in d:
            raise ScriptError("step needs actor and action")
        if d["action"] not in ACTIONS:
            raise ScriptError(f"unknown action {d['action']!r}")
        if d["action"] in ("read", "write") and d.get("obj") is None:
            raise ScriptError(f"{d['action']} needs obj")
        return cls(**{k: d[k] for k in d})

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class Script:
    steps: list
    objects: list = field(default_factory=lambda: ["x"])
    config: dict = field(default_factory=dict)
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "Script":
        if "steps" not in d:
            raise ScriptError("script needs steps")
        objects = d.get("objects", 1)
        if isinstance(objects, int):
            objects = list(range(objects))
        steps = []
        for i, s in enumerate(d["steps"]):
            try:
                steps.append(Step.from_dict(s))
            except (ScriptError, TypeError) as exc:
                raise ScriptError(f"step {i}: {exc}") from exc
        return cls(steps, list(objects), dict(d.get("config", {})), d.get("name", ""))

    @classmethod
    def loads(cls, text: str) -> "Script":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ScriptError(f"line {exc.lineno}: {exc.msg}") from exc

    @classmethod
    def load(cls, path) -> "Script":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    def dumps(self) -> str:
        return json.dumps({"name": self.name, "objects": self.objects,
                           "config": self.config,
                           "steps": [s.to_dict() for s in self.steps]}, indent=1)

    def stm_config(self, **overrides) -> StmConfig:
        kw = dict(self.config)
        kw.update(overrides)
        return StmConfig(**kw)


@dataclass
class StepOutcome:
    index: int
    actor: str
    action: str
    tx: Optional[int]
    result: str  # ok | commit | abort | skipped
    value: Any = None
    reason: Optional[str] = None

    def __str__(self) -> str:
        tx = f"T{self.tx}" if self.tx is not None else "-"
        extra = f" value={self.value!r}" if self.value is not None else ""
        why = f" ({self.reason})" if self.reason else ""
        return (f"{self.index:3d} {self.actor:>6} {self.action:<6} {tx:>6} "
                f"{self.result.upper()}{extra}{why}")


@dataclass
class _Actor:
    its: Optional[int] = None
    tx: Optional[TransactionDescriptor] = None
    incarnations: int = 0


@dataclass
class ScriptResult:
    outcomes: list
    history: Optional[History]
    protocol: Protocol
    actors: dict

    def status(self, actor: str) -> str:
        tx = self.actors[actor].tx
        return tx.status.value if tx is not None else "unknown"

    def incarnations(self, actor: str) -> int:
        return self.actors[actor].incarnations

    def outcomes_of(self, actor: str, action: Optional[str] = None) -> list:
        return [o for o in self.outcomes
                if o.actor == actor and (action is None or o.action == action)]

    def tx_ids(self, actor: str) -> list[int]:
        return [o.tx for o in self.outcomes_of(actor, "begin")]


class ScriptRunner:
    """Feeds steps one at a time to a fresh protocol instance."""

    def __init__(self, protocol, objects, config: Optional[StmConfig] = None,
                 record: bool = True):
        self.objects = list(objects)
        self._oid = {name: i for i, name in enumerate(self.objects)}
        self.recorder = Recorder() if record else None
        self.stm = make_protocol(protocol, len(self.objects), config, self.recorder)
        self.actors: dict[str, _Actor] = {}
        self.outcomes: list[StepOutcome] = []

    def oid(self, obj) -> int:
        if obj in self._oid:
            return self._oid[obj]
        if isinstance(obj, int) and 0 <= obj < len(self.objects):
            return obj
        raise ScriptError(f"unknown object {obj!r}")

    def step(self, s: Step) -> StepOutcome:
        if isinstance(s, dict):
            s = Step.from_dict(s)
        idx = len(self.outcomes)
        if s.counter is not None:
            self.stm.counter.set(s.counter)
        actor = self.actors.get(s.actor)
        if s.action == "begin":
            out = self._begin(idx, s, actor)
        else:
            if actor is None or actor.tx is None:
                raise ScriptError(f"step {idx}: {s.actor} has not begun")
            tx = actor.tx
            if tx.status is Status.COMMITTED:
                raise ScriptError(f"step {idx}: {s.actor} already committed")
            if tx.status is Status.ABORTED:
                out = StepOutcome(idx, s.actor, s.action, tx.id, "skipped")
            else:
                out = self._run_op(idx, s, tx)
        self.outcomes.append(out)
        return out

    def _begin(self, idx, s: Step, actor: Optional[_Actor]) -> StepOutcome:
        if actor is not None and actor.tx is not None and actor.tx.live:
            raise ScriptError(f"step {idx}: {s.actor} is already live")
        if actor is not None and actor.tx is not None \
                and actor.tx.status is Status.COMMITTED:
            raise ScriptError(f"step {idx}: {s.actor} already committed")
        actor = self.actors.setdefault(s.actor, _Actor())
        its = s.its
        if s.its_of is not None:
            if s.its_of not in self.actors:
                raise ScriptError(f"step {idx}: its_of unknown actor {s.its_of}")
            its = self.actors[s.its_of].its
        if its is None:
            its = actor.its
        tx = self.stm.begin(its, cts=s.cts, wts=s.wts)
        actor.tx = tx
        actor.its = tx.its
        actor.incarnations += 1
        return StepOutcome(idx, s.actor, "begin", tx.id, "ok")

    def _run_op(self, idx, s: Step, tx) -> StepOutcome:
        try:
            if s.action == "read":
                value = self.stm.read(tx, self.oid(s.obj))
                return StepOutcome(idx, s.actor, s.action, tx.id, "ok", value)
            if s.action == "write":
                self.stm.write(tx, self.oid(s.obj), s.value)
                return StepOutcome(idx, s.actor, s.action, tx.id, "ok")
            if s.action == "abort":
                self.stm.abort(tx)
                return StepOutcome(idx, s.actor, s.action, tx.id, "abort", reason="explicit")
            self.stm.try_commit(tx)
            return StepOutcome(idx, s.actor, s.action, tx.id, "commit")
        except Aborted as exc:
            return StepOutcome(idx, s.actor, s.action, tx.id, "abort", reason=exc.reason)

    def result(self) -> ScriptResult:
        history = self.recorder.history() if self.recorder is not None else None
        return ScriptResult(list(self.outcomes), history, self.stm, self.actors)


def run_script(script: Script, protocol, record: bool = True,
               config: Optional[StmConfig] = None) -> ScriptResult:
    """Execute every step in order on one thread against a fresh instance."""
    runner = ScriptRunner(protocol, script.objects,
                          config or script.stm_config(), record)
    for s in script.steps:
        runner.step(s)
    return runner.result()


# --- built-in scenarios ------------------------------------------------------


def h1_script() -> Script:
    """Three transactions with cts 50, 60, 80 and wts 50, 100, 80.

    T3 begins after T2 commits yet, ordered by wts, would read x from T1.
    """
    raw = [
        {"actor": "T1", "action": "begin", "cts": 50},
        {"actor": "T2", "action": "begin", "cts": 60, "wts": 100},
        {"actor": "T1", "action": "read", "obj": "x"},
        {"actor": "T2", "action": "read", "obj": "y"},
        {"actor": "T1", "action": "write", "obj": "x", "value": 10},
        {"actor": "T1", "action": "tryc", "counter": 70},
        {"actor": "T2", "action": "write", "obj": "x", "value": 20},
        {"actor": "T2", "action": "tryc", "counter": 75},
        {"actor": "T3", "action": "begin", "cts": 80},
        {"actor": "T3", "action": "read", "obj": "x"},
        {"actor": "T3", "action": "read", "obj": "z"},
        {"actor": "T3", "action": "tryc"},
    ]
    return Script([Step.from_dict(d) for d in raw], ["x", "y", "z"],
                  {"k": 5, "c": "1/10"}, "h1")


def t26_script(rounds: int = 3) -> Script:
    """The victim (its 26) loses every round to a fresh reader of x[25]."""
    raw = [
        {"actor": "T25", "action": "begin", "cts": 25},
        {"actor": "V", "action": "begin", "cts": 26},
        {"actor": "T25", "action": "write", "obj": "x", "value": 25},
        {"actor": "T25", "action": "tryc"},
    ]
    pins = {1: (None, 29), 2: (33, 34)}
    for r in range(1, rounds + 1):
        v_cts, r_cts = pins.get(r, (None, None))
        if r > 1:
            raw.append({"actor": "V", "action": "begin", "cts": v_cts})
        reader = f"R{r}"
        raw += [
            {"actor": "V", "action": "write", "obj": "x", "value": 26},
            {"actor": reader, "action": "begin", "cts": r_cts},
            {"actor": reader, "action": "read", "obj": "x"},
            {"actor": reader, "action": "tryc"},
            {"actor": "V", "action": "tryc"},
        ]
    steps = [Step.from_dict({k: v for k, v in d.items() if v is not None}) for d in raw]
    return Script(steps, ["x"], {"k": 5, "c": "1/10"}, "t26")


BUILTIN = {"h1": h1_script, "t26": t26_script}


@dataclass
class AdversarialOutcome:
    committed: bool
    incarnations: int
    history: Optional[History]
    outcomes: list


def run_adversarial(protocol, seed: int, max_incarnations: int = 20,
                    config: Optional[StmConfig] = None,
                    record: bool = False) -> AdversarialOutcome:
    """Randomized T26 pattern: each round, 1-3 fresh readers of x commit
    between the victim's write of x and its tryC, alongside 0-2 unrelated
    writers of other objects. Stops once the victim commits.
    """
    rng = random.Random(seed)
    fillers = ["f1", "f2", "f3"]
    runner = ScriptRunner(protocol, ["x"] + fillers, config, record)
    for d in ({"actor": "T25", "action": "begin", "cts": 25},
              {"actor": "V", "action": "begin", "cts": 26},
              {"actor": "T25", "action": "write", "obj": "x", "value": 25},
              {"actor": "T25", "action": "tryc"}):
        runner.step(Step.from_dict(d))
    serial = 0
    for incarnation in range(1, max_incarnations + 1):
        if incarnation > 1:
            runner.step(Step("V", "begin"))
        runner.step(Step("V", "write", "x", incarnation))
        actors = []
        for _ in range(rng.randint(1, 3)):
            serial += 1
            name = f"A{serial}"
            ops = [Step(name, "read", "x")]
            if rng.random() < 0.5:
                ops.append(Step(name, "read", rng.choice(fillers)))
            rng.shuffle(ops)
            actors.append((name, ops))
        for _ in range(rng.randint(0, 2)):
            serial += 1
            name = f"F{serial}"
            actors.append((name, [Step(name, "write", rng.choice(fillers), serial)]))
        rng.shuffle(actors)
        for name, _ in actors:
            runner.step(Step(name, "begin"))
        order = list(actors)
        rng.shuffle(order)
        for name, ops in order:
            for op in ops:
                runner.step(op)
            runner.step(Step(name, "tryc"))
        if runner.step(Step("V", "tryc")).result == "commit":
            res = runner.result()
            return AdversarialOutcome(True, incarnation, res.history, res.outcomes)
    res = runner.result()
    return AdversarialOutcome(False, max_incarnations, res.history, res.outcomes)
