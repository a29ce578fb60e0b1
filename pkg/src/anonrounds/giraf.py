"""Round-based kernel: per-process automata fed with per-round message *sets*.

Processes are anonymous.  An automaton only ever sees its round number and
its inbox; the integer label on :class:`Process` belongs to the simulator and
is never handed to automaton code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol


class HarnessError(RuntimeError):
    """Raised when the simulator drives a process in a way the model forbids."""


@dataclass(frozen=True)
class Decide:
    """Returned by ``compute`` to decide ``value`` and halt."""

    value: Any


class Automaton(Protocol):
    def initialize(self) -> Any: ...

    def compute(self, k: int, inbox: "RoundInbox") -> Any: ...

    def snapshot(self) -> dict: ...

    def mid_snapshot(self) -> dict: ...


class RoundInbox:
    """The per-round message sets ``M_i[k]``.  Insertion is set union."""

    __slots__ = ("_rounds", "_log")

    def __init__(self):
        self._rounds: dict[int, set] = {}
        self._log: list = []  # (round, payload) in arrival order, first arrivals only

    def __getitem__(self, k: int) -> frozenset:
        return frozenset(self._rounds.get(k, ()))

    def add(self, k: int, payloads) -> None:
        bucket = self._rounds.setdefault(k, set())
        for m in payloads:
            if m not in bucket:
                bucket.add(m)
                self._log.append((k, m))

    def upto(self, k: int):
        """Iterate over every payload received for rounds 1..k."""
        for r, bucket in self._rounds.items():
            if 1 <= r <= k:
                yield from bucket

    def arrivals(self, cursor: int = 0) -> tuple[list, int]:
        """``(round, payload)`` pairs first seen since ``cursor``, and the new cursor."""
        return self._log[cursor:], len(self._log)

    def rounds(self) -> list[int]:
        return sorted(self._rounds)


@dataclass(frozen=True)
class Broadcast:
    payloads: frozenset
    round: int


@dataclass
class StepResult:
    """What one end-of-round did; the simulator turns this into trace events."""

    round: int  # round entered (or the round in which the process decided)
    payload: Any = None
    inbox: frozenset | None = None  # M_i[k] as read by compute, None for initialize
    mid: dict | None = None
    broadcast: Broadcast | None = None
    decided: Any = None
    halted: bool = False


@dataclass
class Process:
    label: int
    automaton: Any
    round: int = 0
    inbox: RoundInbox = field(default_factory=RoundInbox)
    halted: bool = False
    crashed: bool = False
    decision: Any = None

    @property
    def active(self) -> bool:
        return not (self.halted or self.crashed)


def end_of_round(proc: Process, record: bool = False) -> StepResult:
    """Run one ``end-of-round`` input action.

    ``record`` asks the automaton for its mid-round and end-of-round state
    snapshots; switch it off in bulk fuzzing where nobody reads them.
    """
    if proc.crashed:
        raise HarnessError(f"end_of_round on crashed process {proc.label}")
    if proc.halted:
        raise HarnessError(f"end_of_round on halted process {proc.label}")
    k = proc.round
    auto = proc.automaton
    if k == 0:
        m = auto.initialize()
        read = None
    else:
        read = proc.inbox[k]
        m = auto.compute(k, proc.inbox)
    mid = auto.mid_snapshot() if (record and k > 0) else None
    if isinstance(m, Decide):
        proc.halted = True
        proc.decision = m.value
        return StepResult(round=k, inbox=read, mid=mid, decided=m.value, halted=True)
    proc.inbox.add(k + 1, (m,))
    proc.round = k + 1
    return StepResult(
        round=k + 1,
        payload=m,
        inbox=read,
        mid=mid,
        broadcast=Broadcast(proc.inbox[k + 1], k + 1),
    )


def receive(proc: Process, payloads, k: int) -> None:
    """``receive(<M, k>)``: union a delivered bundle into ``M_i[k]``."""
    if proc.crashed:
        return
    proc.inbox.add(k, payloads)


def crash(proc: Process) -> None:
    proc.crashed = True


def snapshot(proc: Process) -> dict:
    """Read-only copy of the automaton variables tagged with label and round.

    A crashed or halted process takes no more steps, so its automaton still
    holds the last state it reached.
    """
    return {"label": proc.label, "round": proc.round, "state": proc.automaton.snapshot()}
