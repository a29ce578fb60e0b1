"""Weak-sets: the interval-semantics oracle, the round-based implementation
for the moving-source environment, and a regular register built on top.

A weak-set has ``add(v)`` and ``get()``.  A get returns every value whose add
completed before the get started, may return values whose add overlaps it,
and never returns a value nobody started adding before the get ended.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Iterable

from .giraf import HarnessError
from .trace import Trace
from .values import digest, encode

EMPTY_SET = frozenset()


# -- operation logs and the oracle -------------------------------------------


@dataclass
class OpRecord:
    """One weak-set operation.  ``start``/``end`` are positions in a global
    event order; instantaneous gets have ``start == end``."""

    op: int
    proc: int
    kind: str  # "add" | "get"
    start: int
    end: int | None = None
    value: Any = None
    result: frozenset | None = None


@dataclass(frozen=True)
class OpViolation:
    op: int
    rule: str
    detail: str = ""

    def __str__(self):
        return f"op {self.op}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


def oracle_check(log: Iterable[OpRecord]) -> OpViolation | None:
    """Check every completed get against the interval bounds.

    ``{v : add(v) ended before g.start} <= g.result <= {v : add(v) started
    before g.end}``.  Returns the first offending get in start order.
    """
    ops = sorted(log, key=lambda o: o.start)
    adds = [o for o in ops if o.kind == "add"]
    for g in ops:
        if g.kind != "get" or g.end is None:
            continue
        result = g.result or EMPTY_SET
        must = {a.value for a in adds if a.end is not None and a.end < g.start}
        may = {a.value for a in adds if a.start < g.end}
        missing = must - result
        if missing:
            return OpViolation(g.op, "completed add missing from get", _show(missing))
        phantom = result - may
        if phantom:
            return OpViolation(g.op, "get returned a value never added", _show(phantom))
    return None


def _show(values) -> str:
    return ", ".join(sorted(repr(v) for v in values))


def op_log(trace: Trace) -> list[OpRecord]:
    """Rebuild the weak-set operation log of a trace; time is event position."""
    ops: dict[int, OpRecord] = {}
    for pos, ev in enumerate(trace.events):
        t = ev["type"]
        if t == "add_start":
            ops[ev["op"]] = OpRecord(ev["op"], ev["proc"], "add", pos, value=ev["value"])
        elif t == "add_end":
            ops[ev["op"]].end = pos
        elif t == "get":
            ops[ev["op"]] = OpRecord(ev["op"], ev["proc"], "get", pos, pos, result=frozenset(ev["result"]))
    return [ops[k] for k in sorted(ops)]


def _keyed(v):
    """Trace form of a weak-set element: ints stay, anything else is digested."""
    return v if isinstance(v, int) else digest(v)


def check_weakset_trace(trace: Trace) -> OpViolation | None:
    """:func:`oracle_check` over a trace, comparing elements by trace form."""
    log = op_log(trace)
    for o in log:
        if o.kind == "add":
            o.value = _keyed(o.value)
        else:
            o.result = frozenset(_keyed(x) for x in o.result)
    return oracle_check(log)


def check_adds_complete(trace: Trace) -> OpViolation | None:
    """Every add started by a process that never crashed completed."""
    crashed = {ev["proc"] for ev in trace.events if ev["type"] == "crash"}
    for o in op_log(trace):
        if o.kind == "add" and o.end is None and o.proc not in crashed:
            return OpViolation(o.op, "add never completed", f"process {o.proc}")
    return None


# -- the round-based implementation --------------------------------------------


def _flat(values: frozenset) -> list:
    return sorted((_keyed(v) for v in values), key=lambda x: (isinstance(x, str), x))


class WeakSetAutomaton:
    """Round automaton implementing a weak-set in the moving-source environment.

    ``add`` and ``get`` are called by the harness between steps.  An add is
    complete once its value shows up in every set received in one round;
    :attr:`completed` flags the compute step where that happened.
    """

    algorithm = "WEAKSET"

    def __init__(self):
        self.val = None
        self.proposed = EMPTY_SET
        self.written = EMPTY_SET
        self.block = False
        self.completed = False
        self._cursor = 0
        self._ahead: list = []  # arrivals for rounds not reached yet
        self._mid = None

    def add(self, v) -> None:
        if self.block:
            raise HarnessError("add issued while another add is pending")
        self.proposed = self.proposed | {v}
        self.val = v
        self.block = True

    def get(self) -> frozenset:
        return self.proposed

    def initialize(self):
        return self.proposed

    def compute(self, k, inbox):
        self.completed = False
        self.written = frozenset.intersection(*inbox[k])
        # union over rounds 1..k, fed incrementally from the arrival log
        fresh, self._cursor = inbox.arrivals(self._cursor)
        pending = self._ahead + fresh
        self._ahead = [(r, m) for r, m in pending if r > k]
        grown = set(self.proposed)
        for r, m in pending:
            if r <= k:
                grown.update(m)
        self.proposed = frozenset(grown)
        self._mid = (self.written, self.proposed)
        if self.block and self.val in self.written:
            self.block = False
            self.completed = True
        return self.proposed

    def snapshot(self, full: bool = True) -> dict:
        if not full:
            return {"proposed_size": len(self.proposed), "block": self.block}
        return {
            "val": _keyed(self.val) if self.val is not None else None,
            "written": _flat(self.written),
            "proposed": _flat(self.proposed),
            "block": self.block,
        }

    def mid_snapshot(self) -> dict:
        written, proposed = self._mid
        return {"written": _flat(written), "proposed": _flat(proposed)}


class LinearizableWeakSet:
    """In-memory weak-set whose adds take effect at an explicit instant.

    The caller picks the instant anywhere inside the add's interval, which
    makes every history linearizable and hence within interval semantics.
    """

    def __init__(self):
        self.items: set = set()

    def take_effect(self, v) -> None:
        self.items.add(v)

    def get(self) -> frozenset:
        return frozenset(self.items)


# -- register over a weak-set ----------------------------------------------------


class _Empty:
    __slots__ = ()

    def __repr__(self):
        return "EMPTY"


EMPTY = _Empty()


class RegEntry:
    """A written value tagged with the weak-set contents seen before writing."""

    __slots__ = ("value", "history", "_hash")

    def __init__(self, value: int, history: frozenset):
        self.value = value
        self.history = frozenset(history)
        self._hash = hash((value, self.history))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (isinstance(other, RegEntry) and self._hash == other._hash
                and self.value == other.value and self.history == other.history)

    def __repr__(self):
        return f"RegEntry({self.value}, len={len(self.history)})"

    def __canonical__(self):
        # nested entries by digest: size stays linear in the history length
        return {"v": encode(self.value), "h": sorted(digest(e) for e in self.history)}


def read_rule(entries: Iterable[RegEntry]):
    """Highest value among the entries with the longest history, or EMPTY."""
    best = None
    for e in entries:
        key = (len(e.history), e.value)
        if best is None or key > best:
            best = key
    return EMPTY if best is None else best[1]


class Register:
    """Multi-writer multi-reader regular register over any ``add``/``get`` object."""

    def __init__(self, ws):
        self.ws = ws

    def write_entry(self, v: int) -> RegEntry:
        return RegEntry(v, self.ws.get())

    def write(self, v: int) -> RegEntry:
        entry = self.write_entry(v)
        self.ws.add(entry)
        return entry

    def read(self):
        return read_rule(self.ws.get())


@dataclass
class _Write:
    op: int
    proc: int
    value: int
    hlen: int
    start: int
    end: int | None = None


def check_register(trace: Trace) -> OpViolation | None:
    """Reads return what a regular register allows.

    Let ``w*`` be the completed write with the longest history (then the
    highest value) at the read's start.  A read overlapping no write returns
    ``w*``'s value (EMPTY if none); an overlapping read may also return the
    value of any write it overlaps.
    """
    writes: dict[int, _Write] = {}
    for pos, ev in enumerate(trace.events):
        t = ev["type"]
        if t == "write_start":
            writes[ev["op"]] = _Write(ev["op"], ev["proc"], ev["value"], ev["hlen"], pos)
        elif t == "write_end":
            writes[ev["op"]].end = pos
        elif t == "read":
            done = [w for w in writes.values() if w.end is not None and w.end < pos]
            overlapping = [w for w in writes.values() if w.end is None or w.end > pos]
            best = max(done, key=lambda w: (w.hlen, w.value), default=None)
            legal = {None if best is None else best.value}
            legal.update(w.value for w in overlapping)
            if ev["value"] not in legal:
                return OpViolation(ev["op"], "illegal register read",
                                   f"read {ev['value']!r}, allowed {sorted(legal, key=repr)}")
    return None


# -- lock-step workloads ---------------------------------------------------------


@dataclass
class Workload:
    """Random add/get (or write/read) traffic issued between lock-step ticks.

    Adds start only while they can still complete before the horizon: a value
    added after round ``t`` is relayed to everyone within ``d_max`` rounds
    and written one round later.
    """

    seed: int = 0
    p_op: float = 0.3
    p_add: float = 0.5
    values: int = 10
    register: bool = False
    _rng: random.Random = field(init=False, repr=False)
    _next_op: int = field(default=0, init=False)
    _pending: dict = field(default_factory=dict, init=False)  # proc -> (add op, write op)

    def __post_init__(self):
        self._rng = random.Random(self.seed)

    def _op(self) -> int:
        self._next_op += 1
        return self._next_op

    def on_step(self, sim, proc, res, tick) -> None:
        auto = proc.automaton
        if not getattr(auto, "completed", False) or proc.label not in self._pending:
            return
        add_op, write_op = self._pending.pop(proc.label)
        sim.trace.add("add_end", proc=proc.label, tick=tick, op=add_op)
        if write_op is not None:
            sim.trace.add("write_end", proc=proc.label, tick=tick, op=write_op)

    def between_ticks(self, sim, tick) -> None:
        rng, tr = self._rng, sim.trace
        can_add = tick + sim.sched.d_max + 2 <= sim.sched.horizon
        for proc in sim.procs:
            if proc.crashed or rng.random() >= self.p_op:
                continue
            ws = proc.automaton
            want_add = rng.random() < self.p_add
            if want_add and can_add and proc.label not in self._pending:
                v = rng.randrange(self.values)
                write_op = None
                if self.register:
                    entry = Register(ws).write_entry(v)
                    write_op = self._op()
                    tr.add("write_start", proc=proc.label, tick=tick, op=write_op, value=v,
                           hlen=len(entry.history))
                    v = entry
                add_op = self._op()
                tr.add("add_start", proc=proc.label, tick=tick, op=add_op, value=v)
                ws.add(v)
                self._pending[proc.label] = (add_op, write_op)
            elif not want_add:
                got = ws.get()
                tr.add("get", proc=proc.label, tick=tick, op=self._op(), result=got)
                if self.register:
                    r = read_rule(got)
                    tr.add("read", proc=proc.label, tick=tick, op=self._op(),
                           value=None if r is EMPTY else r)
