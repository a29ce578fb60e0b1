"""Simulation loops driving the kernel under a schedule.

Lock-step mode: at tick ``t`` every live process performs its end-of-round
(entering round ``t``), then the round-``t`` broadcasts go out.  Timely ones
land in the recipients' ``M[t]`` before tick ``t + 1``; late ones arrive
``late[t][s][j]`` ticks later, after the recipient already computed round
``t``.

Skewed mode: processes step one at a time, picked by a seeded interleaver
with per-process speeds.  A process may compute round ``k`` only once every
round-``k`` message it is owed over a timely link has arrived; everything
else arrives after a random delay.  A process that has not moved for
``fairness_window`` steps while able to is scheduled next.

In both modes, when the round-``k`` source chosen by the schedule decided
and stopped before sending, the next process in the schedule's source order
is treated as timely for that round, so the environment guarantee holds in
the realized run.
"""

from __future__ import annotations

import heapq
import random
from collections import defaultdict
from typing import Callable

from .giraf import HarnessError, Process, crash, end_of_round, receive
from .schedule import Schedule, validate_schedule
from .trace import Trace


class SimulationAborted(RuntimeError):
    """An automaton raised; ``trace`` holds the prefix up to the failure."""

    def __init__(self, message: str, trace: Trace):
        super().__init__(message)
        self.trace = trace


class Simulation:
    def __init__(
        self,
        sched: Schedule,
        factory: Callable[[int], object],
        *,
        mode: str = "lockstep",
        seed: int = 0,
        record: bool = True,
        header: dict | None = None,
        fairness_window: int | None = None,
        check_schedule: bool = True,
    ):
        if mode not in ("lockstep", "skewed"):
            raise ValueError(f"unknown mode {mode!r}")
        if check_schedule:
            bad = validate_schedule(sched)
            if bad is not None:
                raise ValueError(f"invalid schedule: {bad}")
        self.sched = sched
        self.mode = mode
        self.seed = seed
        self.record = record
        self.procs = [Process(i, factory(i)) for i in range(sched.n)]
        head = {
            "env": sched.env,
            "n": sched.n,
            "horizon": sched.horizon,
            "mode": mode,
            "k_stab": sched.k_stab,
            "stable_source": sched.stable_source,
            "crash_round": list(sched.crash_round),
            "schedule_seed": sched.seed,
            "sim_seed": seed,
            "emulated": False,
        }
        head.update(header or {})
        self.trace = Trace(head)
        self.tick = 0
        self.observers: list = []
        self._pending: dict[int, list] = defaultdict(list)
        self.fairness_window = fairness_window or 4 * sched.n

    # -- shared helpers ------------------------------------------------

    def _emit_step(self, proc: Process, res, tick: int) -> None:
        tr = self.trace
        if res.inbox is not None:
            tr.add("compute", proc=proc.label, round=res.round if res.halted else res.round - 1,
                   tick=tick, inbox=res.inbox)
            if res.mid is not None:
                tr.add("snapshot", proc=proc.label, round=res.round if res.halted else res.round - 1,
                       tick=tick, phase="mid", state=res.mid)
        if res.halted:
            tr.add("decide", proc=proc.label, round=res.round, tick=tick, value=res.decided)
            return
        tr.add("end_of_round", proc=proc.label, round=res.round, tick=tick, payload=res.payload)
        if self.record:
            tr.add("snapshot", proc=proc.label, round=res.round, tick=tick, phase="end",
                   state=proc.automaton.snapshot(full=False))

    def _step(self, proc: Process, tick: int):
        try:
            res = end_of_round(proc, record=self.record)
        except HarnessError:
            raise
        except Exception as exc:  # automaton bug: keep the prefix for debugging
            raise SimulationAborted(f"process {proc.label} failed at tick {tick}: {exc!r}", self.trace) from exc
        self._emit_step(proc, res, tick)
        for obs in self.observers:
            obs.on_step(self, proc, res, tick)
        return res

    def _deliver(self, sender: int | None, j: int, bundle, k: int, tick: int, timely: bool) -> None:
        proc = self.procs[j]
        if proc.crashed:
            return
        receive(proc, bundle, k)
        self.trace.add("deliver", proc=j, sender=sender, round=k, tick=tick, bundle=bundle,
                       timely=timely, at_round=proc.round)

    def crash(self, label: int, tick: int | None = None) -> None:
        proc = self.procs[label]
        if proc.crashed:
            return
        crash(proc)
        self.trace.add("crash", proc=label, round=proc.round, tick=self.tick if tick is None else tick)

    def _promoted_source(self, k: int, senders: list[int]) -> int | None:
        """Stand-in source for round ``k`` when the scheduled one stopped early.

        The first process of the schedule's source order that actually sent
        round ``k`` is made timely, so an eventually stable source stays
        stable after the preferred one decides.
        """
        order = self.sched.sources[k]
        if not order or order[0] in senders:
            return None
        sset = set(senders)
        for c in order:
            if c in sset:
                return c
        return None

    # -- lock-step -------------------------------------------------------

    def advance(self) -> bool:
        """Run one lock-step tick; False once the horizon has been reached."""
        if self.tick >= self.sched.horizon:
            return False
        self.tick += 1
        t = self.tick
        sched = self.sched
        for p in self.procs:
            c = sched.crash_round[p.label]
            if c is not None and c <= t and not p.crashed:
                self.crash(p.label, t)
        sent = []
        for p in self.procs:
            if p.active:
                res = self._step(p, t)
                if res.broadcast is not None:
                    sent.append((p.label, res.broadcast.payloads))
        promoted = self._promoted_source(t, [s for s, _ in sent])
        tk, lk = sched.timely[t], sched.late[t]
        for s, bundle in sent:
            row_t, row_l = tk[s], lk[s]
            for j in range(sched.n):
                if j == s:
                    continue
                if row_t[j] or s == promoted:
                    self._deliver(s, j, bundle, t, t, True)
                else:
                    self._pending[t + row_l[j]].append((s, j, bundle, t))
        for s, j, bundle, k in self._pending.pop(t, ()):
            self._deliver(s, j, bundle, k, t, False)
        for obs in self.observers:
            obs.between_ticks(self, t)
        return True

    def flush(self) -> None:
        """Deliver everything still in flight (reliable broadcast at the horizon)."""
        for t in sorted(self._pending):
            for s, j, bundle, k in self._pending[t]:
                self._deliver(s, j, bundle, k, t, False)
        self._pending.clear()

    def run_lockstep(self) -> Trace:
        while self.advance():
            pass
        self.flush()
        return self.trace

    # -- skewed ----------------------------------------------------------

    def run_skewed(self) -> Trace:
        sched, procs, n = self.sched, self.procs, self.sched.n
        H = sched.horizon
        rng = random.Random(self.seed)
        speed = [rng.expovariate(1.0) + 0.05 for _ in range(n)]
        arrived = [set() for _ in range(n)]  # (sender, round) bundles received
        heap: list = []
        seq = 0
        ready_since: dict[int, int] = {}
        step = 0

        def crash_due(p: Process) -> bool:
            c = sched.crash_round[p.label]
            return c is not None and p.round >= c - 1

        def may_send(s: int, k: int) -> bool:
            p = procs[s]
            return p.active and sched.sends(s, k)

        def source_of(k: int) -> int | None:
            for c in sched.sources[k]:
                if procs[c].round >= k or may_send(c, k):
                    return c
            return None

        def owed(j: int, k: int) -> list[int]:
            tk = sched.timely[k]
            src = source_of(k)
            return [s for s in range(n) if s != j and (tk[s][j] or s == src)]

        def ready(j: int) -> bool:
            p = procs[j]
            if not p.active or p.round >= H:
                return False
            k = p.round
            if k == 0:
                return True
            for s in owed(j, k):
                if procs[s].round >= k:
                    if (s, k) not in arrived[j]:
                        return False
                elif may_send(s, k):
                    return False
            return True

        for p in procs:
            if crash_due(p):
                self.crash(p.label, 0)

        while True:
            while heap and heap[0][0] <= step:
                _, _, s, j, bundle, k, timely = heapq.heappop(heap)
                if not procs[j].crashed:
                    arrived[j].add((s, k))
                self._deliver(s, j, bundle, k, step, timely)
            cand = [p.label for p in procs if ready(p.label)]
            if not cand:
                if not heap:
                    break
                step = max(step + 1, heap[0][0])
                continue
            step += 1
            self.tick = step
            for x in cand:
                ready_since.setdefault(x, step)
            starving = [x for x in cand if step - ready_since[x] >= self.fairness_window]
            if starving:
                j = min(starving, key=lambda x: (ready_since[x], x))
            else:
                j = rng.choices(cand, weights=[speed[x] for x in cand])[0]
            del ready_since[j]
            p = procs[j]
            res = self._step(p, step)
            if res.broadcast is not None:
                k = res.broadcast.round
                tk, lk = sched.timely[k], sched.late[k]
                for r in range(n):
                    if r == j:
                        continue
                    if tk[j][r]:
                        delay = rng.randint(1, n)
                        timely = True
                    else:
                        delay = rng.randint(1, max(1, lk[j][r] * n))
                        timely = False
                    seq += 1
                    heapq.heappush(heap, (step + delay, seq, j, r, res.broadcast.payloads, k, timely))
                if crash_due(p):
                    self.crash(j, step)
        return self.trace

    def run(self) -> Trace:
        if self.mode == "lockstep":
            return self.run_lockstep()
        return self.run_skewed()


def run_simulation(sched: Schedule, automaton_factory, mode: str = "lockstep", seed: int = 0,
                   record: bool = True, header: dict | None = None, **kw) -> Trace:
    """Drive one run of ``automaton_factory(label)`` automata under ``sched``."""
    return Simulation(sched, automaton_factory, mode=mode, seed=seed, record=record,
                      header=header, **kw).run()
