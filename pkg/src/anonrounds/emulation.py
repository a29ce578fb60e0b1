"""Emulating the moving-source environment on top of a weak-set.

Each process sends its round-``k`` bundle by adding ``(bundle, k)`` to a
shared weak-set and waiting for the add to complete.  It then receives every
pair returned by ``get`` that it has not delivered yet and ends the round.
The first process whose round-``k`` add completes is a source for round
``k``: everyone else ends round ``k`` only after their own add completed,
and their get then contains that pair.

Two weak-set backends are provided: a linearizable in-memory object driven
by random operation durations, and a network of :class:`WeakSetAutomaton`
processes running in lock-step under a moving-source schedule.
"""

from __future__ import annotations

import heapq
import random
from typing import Callable

from .giraf import HarnessError, Process, crash, end_of_round, receive
from .schedule import Schedule
from .sim import Simulation
from .trace import Trace
from .values import digest
from .weakset import LinearizableWeakSet, WeakSetAutomaton

BACKENDS = ("oracle", "network")


class Flood:
    """Never-halting automaton: broadcasts every value heard so far."""

    algorithm = "FLOOD"

    def __init__(self, value: int):
        self.heard = frozenset((value,))

    def initialize(self):
        return self.heard

    def compute(self, k, inbox):
        self.heard = self.heard.union(*inbox[k])
        return self.heard

    def snapshot(self, full: bool = True) -> dict:
        return {"heard": sorted(self.heard)}

    def mid_snapshot(self) -> dict:
        return self.snapshot()


class Emulator:
    """Rounds of ``n`` wrapped automata driven through a weak-set backend.

    The backend calls :meth:`completed` when a process's add finishes; the
    emulator answers with a get, the deliveries and the next end-of-round.
    """

    def __init__(self, factory: Callable[[int], object], n: int, horizon: int, *,
                 header: dict | None = None, record: bool = True):
        self.n = n
        self.horizon = horizon
        self.record = record
        self.procs = [Process(i, factory(i)) for i in range(n)]
        self.delivered = [set() for _ in range(n)]
        self.booted = [False] * n
        self.waiting: dict[int, int] = {}  # proc -> pending add op
        self._ops = 0
        head = {"env": "MS", "n": n, "horizon": horizon, "mode": "emulated", "emulated": True,
                "k_stab": None, "stable_source": None}
        head.update(header or {})
        self.trace = Trace(head)
        self.backend = None

    # -- the two input actions --------------------------------------------------

    def boot(self, i: int, tick: int) -> None:
        if self.booted[i]:
            raise HarnessError(f"process {i} booted twice")
        self.booted[i] = True
        self._end_round(i, tick)

    def completed(self, i: int, tick: int) -> None:
        """Add of process ``i`` finished: drain the weak-set, end the round."""
        proc = self.procs[i]
        op = self.waiting.pop(i)
        tr = self.trace
        tr.add("add_end", proc=i, tick=tick, op=op)
        got = self.backend.get(i)
        self._ops += 1
        tr.add("get", proc=i, tick=tick, op=self._ops, result=got)
        fresh = got - self.delivered[i]
        for pair in sorted(fresh, key=lambda bk: (bk[1], digest(bk[0]))):
            bundle, k = pair
            receive(proc, bundle, k)
            tr.add("deliver", proc=i, sender=None, round=k, tick=tick, bundle=bundle,
                   timely=None, at_round=proc.round)
        self.delivered[i] |= fresh
        if proc.round < self.horizon:
            self._end_round(i, tick)

    def crash(self, i: int, tick: int) -> None:
        proc = self.procs[i]
        if proc.crashed:
            return
        crash(proc)
        self.waiting.pop(i, None)
        self.trace.add("crash", proc=i, round=proc.round, tick=tick)

    # -- helpers ------------------------------------------------------------------

    def _end_round(self, i: int, tick: int) -> None:
        proc = self.procs[i]
        res = end_of_round(proc, record=self.record)
        tr = self.trace
        if res.inbox is not None:
            r = res.round if res.halted else res.round - 1
            tr.add("compute", proc=i, round=r, tick=tick, inbox=res.inbox)
            if res.mid is not None:
                tr.add("snapshot", proc=i, round=r, tick=tick, phase="mid", state=res.mid)
        if res.halted:
            tr.add("decide", proc=i, round=res.round, tick=tick, value=res.decided)
            return
        tr.add("end_of_round", proc=i, round=res.round, tick=tick, payload=res.payload)
        pair = (res.broadcast.payloads, res.broadcast.round)
        self._ops += 1
        self.waiting[i] = self._ops
        tr.add("add_start", proc=i, tick=tick, op=self._ops, value=pair)
        self.backend.start_add(i, pair, tick)

    @property
    def done(self) -> bool:
        return all(not p.active or (p.round >= self.horizon and p.label not in self.waiting)
                   for p in self.procs)


class OracleBackend:
    """Linearizable weak-set with seeded operation timing.

    An add started at time ``t`` takes effect at ``t + a`` and returns at
    ``t + a + b``, with ``a`` and ``b`` drawn up to a per-process span.  A
    process scheduled to crash dies at a random instant inside its last add,
    which therefore may or may not take effect.
    """

    def __init__(self, emu: Emulator, seed: int, crash_round: list):
        self.emu = emu
        self.rng = random.Random(seed)
        self.span = [self.rng.choice((1, 2, 4, 8)) for _ in range(emu.n)]
        self.store = LinearizableWeakSet()
        self.crash_round = crash_round
        self.heap: list = []
        self.seq = 0
        self.now = 0

    def _at(self, t: int, kind: str, i: int, item=None) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, self.seq, kind, i, item))

    def start_add(self, i: int, pair, tick: int) -> None:
        a = self.rng.randint(0, self.span[i])
        b = self.rng.randint(0, self.span[i])
        self._at(tick + a, "effect", i, pair)
        self._at(tick + a + b, "done", i)
        c = self.crash_round[i]
        if c is not None and self.emu.procs[i].round >= c - 1:
            self._at(tick + self.rng.randint(0, a + b), "crash", i)

    def get(self, i: int) -> frozenset:
        return self.store.get()

    def run(self) -> Trace:
        emu = self.emu
        for i in range(emu.n):
            if self.crash_round[i] == 1:
                emu.crash(i, 0)
        for i in range(emu.n):
            if not emu.procs[i].crashed:
                emu.boot(i, 0)
        while self.heap:
            t, _, kind, i, item = heapq.heappop(self.heap)
            self.now = t
            if emu.procs[i].crashed:
                continue
            if kind == "crash":
                emu.crash(i, t)
            elif kind == "effect":
                self.store.take_effect(item)
            else:
                emu.completed(i, t)
        return emu.trace


class NetworkBackend:
    """The weak-set is a lock-step network of :class:`WeakSetAutomaton`.

    Process ``i`` of the emulation is the client of weak-set process ``i``;
    a crash of the weak-set process crashes the emulated one with it.
    Completed adds are served between ticks in label order.
    """

    def __init__(self, emu: Emulator, sched: Schedule, seed: int):
        if sched.n != emu.n:
            raise ValueError("schedule size does not match the emulation")
        self.emu = emu
        self.sim = Simulation(sched, lambda i: WeakSetAutomaton(), seed=seed, record=False)
        self.sim.observers.append(self)
        self._done: list[int] = []

    def start_add(self, i: int, pair, tick: int) -> None:
        self.sim.procs[i].automaton.add(pair)

    def get(self, i: int) -> frozenset:
        return self.sim.procs[i].automaton.get()

    def on_step(self, sim, proc, res, tick) -> None:
        if proc.automaton.completed and proc.label in self.emu.waiting:
            self._done.append(proc.label)

    def between_ticks(self, sim, tick) -> None:
        emu = self.emu
        for p in sim.procs:
            if p.crashed:
                emu.crash(p.label, tick)
        done, self._done = sorted(self._done), []
        for i in done:
            if not emu.procs[i].crashed:
                emu.completed(i, tick)

    def run(self) -> Trace:
        emu, sim = self.emu, self.sim
        for i, c in enumerate(sim.sched.crash_round):
            if c is not None and c <= 1:
                emu.crash(i, 0)
        for i in range(emu.n):
            if not emu.procs[i].crashed:
                emu.boot(i, 0)
        while not emu.done and sim.advance():
            pass
        return emu.trace


def inner_horizon(horizon: int, d_max: int) -> int:
    """Lock-step ticks after which every emulated round has had time to finish."""
    return (horizon + 1) * (d_max + 3)


def run_emulation(factory, n: int, horizon: int, backend: str, *, seed: int = 0,
                  crash_round: list | None = None, sched: Schedule | None = None,
                  header: dict | None = None, record: bool = True) -> Trace:
    """One emulated run; ``sched`` drives the ``network`` backend, ``crash_round``
    (emulated rounds, same convention as schedules) the ``oracle`` one."""
    head = {"backend": backend, "sim_seed": seed}
    head.update(header or {})
    emu = Emulator(factory, n, horizon, header=head, record=record)
    if backend == "oracle":
        crash_round = list(crash_round or [None] * n)
        emu.trace.header["crash_round"] = crash_round
        emu.backend = OracleBackend(emu, seed, crash_round)
    elif backend == "network":
        if sched is None:
            raise ValueError("the network backend needs a schedule")
        emu.trace.header["inner_crash_round"] = list(sched.crash_round)
        emu.trace.header["schedule_seed"] = sched.seed
        emu.backend = NetworkBackend(emu, sched, seed)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return emu.backend.run()


def check_progress(trace: Trace):
    """Every correct, undecided process reached the emulated horizon."""
    from .checks import check_fairness
    return check_fairness(trace)
