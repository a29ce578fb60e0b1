"""Property checkers over traces.

Every checker takes a :class:`~anonrounds.trace.Trace` (in memory or read
back from disk) and returns ``None`` when the property holds or the
:class:`~anonrounds.schedule.Violation` at the earliest offending round.
"""

from __future__ import annotations

import math
from collections import defaultdict
from functools import cached_property

from .schedule import Violation
from .trace import Trace
from .values import BOT


def _hashable(x):
    if isinstance(x, list):
        return tuple(_hashable(y) for y in x)
    return x


def as_set(xs) -> frozenset:
    """Snapshot set field (a list once canonicalized) as a frozenset."""
    return frozenset(_hashable(x) for x in xs)


class TraceIndex:
    """Lookup tables over one trace, built once per check pass."""

    def __init__(self, trace: Trace):
        self.trace = trace
        self.header = trace.header
        self.n = trace.header.get("n", 0)
        self.payload: dict = {}
        self.inbox: dict = {}
        self.mid: dict = {}
        self.end: dict = {}
        self.decides: list = []
        self.crashed: dict = {}
        self.eor = defaultdict(list)  # proc -> [(round, tick)]
        self.deliveries = defaultdict(set)  # (sender, round) -> recipients
        for ev in trace.events:
            t = ev["type"]
            if t == "end_of_round":
                self.payload[ev["proc"], ev["round"]] = ev["payload"]
                self.eor[ev["proc"]].append((ev["round"], ev["tick"]))
            elif t == "compute":
                self.inbox[ev["proc"], ev["round"]] = ev["inbox"]
            elif t == "snapshot":
                target = self.mid if ev["phase"] == "mid" else self.end
                target[ev["proc"], ev["round"]] = ev["state"]
            elif t == "decide":
                self.decides.append((ev["round"], ev["proc"], ev["value"]))
            elif t == "crash":
                self.crashed.setdefault(ev["proc"], ev["round"])
            elif t == "deliver" and ev.get("sender") is not None:
                self.deliveries[ev["sender"], ev["round"]].add(ev["proc"])
        self.decides.sort(key=lambda d: (d[0], d[1]))

    @cached_property
    def compute_rounds(self) -> dict:
        by_round = defaultdict(list)
        for (p, k) in self.inbox:
            by_round[k].append(p)
        return {k: sorted(v) for k, v in sorted(by_round.items())}

    @cached_property
    def send_rounds(self) -> dict:
        by_round = defaultdict(list)
        for (p, k) in self.payload:
            by_round[k].append(p)
        return {k: sorted(v) for k, v in by_round.items()}

    @cached_property
    def decided(self) -> dict:
        out = {}
        for k, p, v in self.decides:
            out.setdefault(p, (k, v))
        return out

    @cached_property
    def first_decision(self) -> int | None:
        return self.decides[0][0] if self.decides else None

    @property
    def correct(self) -> list[int]:
        return [p for p in range(self.n) if p not in self.crashed]

    def sources(self, k: int) -> list[int]:
        """Processes whose round-``k`` payload was in every round-``k`` inbox."""
        recips = self.compute_rounds.get(k, [])
        out = []
        for s in self.send_rounds.get(k, []):
            m = self.payload[s, k]
            if all(m in self.inbox[j, k] for j in recips):
                out.append(s)
        return out


def _index(trace) -> TraceIndex:
    return trace if isinstance(trace, TraceIndex) else TraceIndex(trace)


# -- environment -----------------------------------------------------------


def validate_trace_env(trace, env_kind: str, sched=None, *, k_stab: int | None = None,
                       stable_source: int | None = None) -> Violation | None:
    """Check the realized round-by-round deliveries against an environment.

    A process has a timely link in round ``k`` when its round-``k`` payload
    is in the round-``k`` inbox of every process that computed round ``k``.
    Identical payloads from different processes are indistinguishable, which
    is exactly what the model allows.
    """
    ix = _index(trace)
    if sched is not None:
        k_stab = sched.k_stab if k_stab is None else k_stab
        stable_source = sched.stable_source if stable_source is None else stable_source
    if k_stab is None:
        k_stab = ix.header.get("k_stab")
    if stable_source is None:
        stable_source = ix.header.get("stable_source")
    if env_kind in ("ES", "ESS") and k_stab is None:
        return Violation(None, "missing stabilization round")
    # sources timely in every round since stabilization (or since the
    # previous ones all stopped sending after deciding)
    stable = None if stable_source is None else {stable_source}
    for k, recips in ix.compute_rounds.items():
        senders = ix.send_rounds.get(k, [])
        srcs = ix.sources(k)
        if not srcs:
            missing = sorted(
                (s, j) for s in senders for j in recips if ix.payload[s, k] not in ix.inbox[j, k]
            )
            return Violation(k, "no source", f"untimely links {missing[:6]}")
        if env_kind == "ES" and k >= k_stab:
            for s in senders:
                m = ix.payload[s, k]
                for j in recips:
                    if m not in ix.inbox[j, k]:
                        return Violation(k, "not synchronous", f"{s}->{j}")
        if env_kind == "ESS" and k >= k_stab:
            live = None if stable is None else stable & set(senders)
            if not live:
                stable = set(srcs)
                continue
            stable = live & set(srcs)
            if not stable:
                return Violation(k, "stable source lost", f"sources {sorted(live)}")
    return None


def check_fairness(trace) -> Violation | None:
    """Rounds advance by one per end-of-round; every correct process that did
    not decide reaches the horizon (lock-step: one round per tick)."""
    ix = _index(trace)
    horizon = ix.header.get("horizon")
    lockstep = ix.header.get("mode") == "lockstep"
    for p in range(ix.n):
        rounds = ix.eor.get(p, [])
        for i, (r, tick) in enumerate(rounds):
            if r != i + 1:
                return Violation(r, "round skipped", f"process {p}")
            if lockstep and tick != r:
                return Violation(r, "process lagged a tick", f"process {p} at tick {tick}")
        if p in ix.crashed or p in ix.decided or horizon is None:
            continue
        last = rounds[-1][0] if rounds else 0
        if last < horizon:
            return Violation(last + 1, "correct process stopped", f"process {p}")
    return None


def check_reliability(trace) -> Violation | None:
    """Every broadcast reaches every other correct process by the end."""
    ix = _index(trace)
    if ix.header.get("emulated"):
        return None
    correct = ix.correct
    for (s, k) in sorted(ix.payload, key=lambda sk: (sk[1], sk[0])):
        got = ix.deliveries.get((s, k), set())
        for j in correct:
            if j != s and j not in got:
                return Violation(k, "broadcast not delivered", f"{s}->{j}")
    return None


# -- consensus -------------------------------------------------------------


def check_validity(trace) -> Violation | None:
    ix = _index(trace)
    proposals = set(ix.header.get("values") or [])
    for k, p, v in ix.decides:
        if v is None or v is BOT or v not in proposals:
            return Violation(k, "validity", f"process {p} decided {v!r}")
    return None


def check_agreement(trace) -> Violation | None:
    ix = _index(trace)
    if not ix.decides:
        return None
    k0, p0, v0 = ix.decides[0]
    for k, p, v in ix.decides[1:]:
        if v != v0:
            return Violation(k, "agreement", f"process {p0} decided {v0!r} at {k0}, process {p} decided {v!r}")
    return None


def check_bot_never_decided(trace) -> Violation | None:
    ix = _index(trace)
    for k, p, v in ix.decides:
        if v is None or v is BOT:
            return Violation(k, "bottom decided", f"process {p}")
    return None


def check_termination(trace, deadline: int) -> Violation | None:
    """Every correct process decided at a round no later than ``deadline``."""
    ix = _index(trace)
    late = []
    for p in ix.correct:
        d = ix.decided.get(p)
        if d is None or d[0] > deadline:
            late.append((p, None if d is None else d[0]))
    if late:
        return Violation(deadline, "termination", f"undecided or late: {late}")
    return None


def decision_rounds(trace) -> dict:
    return {p: kv[0] for p, kv in _index(trace).decided.items()}


# -- lemma invariants --------------------------------------------------------


def check_written_proposed(trace, conditioned: bool = True) -> Violation | None:
    """A value written anywhere in round ``k`` is proposed by everybody that
    computed round ``k``.  ``conditioned`` restricts to rounds before the
    first decision (the consensus automata halt on deciding)."""
    ix = _index(trace)
    stop = ix.first_decision if conditioned else None
    by_round = defaultdict(list)
    for (p, k), st in ix.mid.items():
        by_round[k].append((p, st))
    for k in sorted(by_round):
        if stop is not None and k > stop:
            break
        rows = sorted(by_round[k], key=lambda ps: ps[0])
        written = {}
        for p, st in rows:
            for v in as_set(st["written"]):
                written.setdefault(v, p)
        for j, st in rows:
            prop = as_set(st["proposed"])
            for v, i in written.items():
                if v not in prop:
                    return Violation(k, "written value not proposed everywhere",
                                     f"{v!r} written at {i}, missing at {j}")
    return None


def check_written_old_written(trace) -> Violation | None:
    """In even rounds before any decision, last round's written values are
    written again at every process that computed this round."""
    ix = _index(trace)
    stop = ix.first_decision
    by_round = defaultdict(list)
    for (p, k), st in ix.mid.items():
        if k % 2 == 0 and "writtenOld" in st:
            by_round[k].append((p, st))
    for k in sorted(by_round):
        if stop is not None and k > stop:
            break
        rows = sorted(by_round[k], key=lambda ps: ps[0])
        old = {}
        for p, st in rows:
            for v in as_set(st["writtenOld"]):
                old.setdefault(v, p)
        for j, st in rows:
            w = as_set(st["written"])
            for v, i in old.items():
                if v not in w:
                    return Violation(k, "previously written value not written again",
                                     f"{v!r} in writtenOld at {i}, not written at {j}")
    return None


def check_decide_guard(trace) -> Violation | None:
    """A process deciding ``v`` in round ``k`` had ``proposed`` within
    ``{v, BOT}`` in rounds ``k - 1`` and ``k``."""
    ix = _index(trace)
    for k, p, v in ix.decides:
        for r in (k - 1, k):
            st = ix.mid.get((p, r))
            if st is None:
                continue
            extra = [x for x in as_set(st["proposed"]) if x is not None and x != v]
            if extra:
                return Violation(r, "decision guard", f"process {p} had {extra} before deciding {v!r}")
    return None


# -- eventually stable source windows ----------------------------------------


def ess_window(trace, quarter: float = 0.25) -> tuple[int, int] | None:
    """Final quarter of the stabilized, pre-decision rounds ``[K, d]``."""
    ix = _index(trace)
    k_stab = ix.header.get("k_stab")
    if k_stab is None or not ix.mid:
        return None
    end = ix.first_decision
    if end is None:
        end = max(k for (_, k) in ix.mid)
    if end < k_stab:
        return None
    span = end - k_stab + 1
    width = max(2, math.ceil(span * quarter))
    start = max(k_stab, end - width + 1)
    return start, end


def out_connected(ix: TraceIndex, source: int, start: int, end: int) -> list[int]:
    """Processes whose messages of some round in ``[start, end]`` reach
    ``source`` along a chain of in-round receptions (heard-of relation)."""
    good_later: set = {source}
    reached: set = set()
    rounds = sorted(k for k in ix.compute_rounds if k >= start)
    for k in reversed(rounds):
        good_now = set()
        for x in ix.send_rounds.get(k, []):
            m = ix.payload[x, k]
            if any(m in ix.inbox.get((y, k), ()) for y in good_later):
                good_now.add(x)
        good_later |= good_now
        if k <= end:
            reached |= good_now
    return sorted(reached)


def _alive_through(ix: TraceIndex, start: int, end: int) -> list[int]:
    return [p for p in range(ix.n) if all((p, k) in ix.mid for k in range(start, end + 1))]


def leaders_by_round(ix: TraceIndex, start: int, end: int) -> dict:
    alive = _alive_through(ix, start, end)
    return {k: frozenset(p for p in alive if ix.mid[p, k].get("leader")) for k in range(start, end + 1)}


def check_ess_window(trace, quarter: float = 0.25) -> Violation | None:
    """Windowed leader and counter behaviour once the source is stable.

    Over the final quarter of the rounds between stabilization and the first
    decision: the set of self-declared leaders among processes alive
    throughout is non-empty and constant, and the counter of the stable
    source's history grows by exactly one per round at every out-connected
    process.  Vacuous when the first decision precedes stabilization.
    """
    ix = _index(trace)
    win = ess_window(ix, quarter)
    if win is None:
        return None
    start, end = win
    previous = None
    for k, leaders in leaders_by_round(ix, start, end).items():
        if not leaders:
            return Violation(k, "no leader")
        if previous is not None and leaders != previous:
            return Violation(k, "leader set changed", f"{sorted(previous)} -> {sorted(leaders)}")
        previous = leaders
    src = ix.header.get("stable_source")
    if src is None or any((src, k) not in ix.mid for k in range(start, end + 1)):
        return None
    for j in out_connected(ix, src, start, end):
        prev_c = None
        for k in range(start, end + 1):
            st = ix.mid.get((j, k))
            if st is None:
                prev_c = None
                continue
            c = _source_counter(st, ix.mid[src, k]["history"])
            if prev_c is not None and c != prev_c + 1:
                return Violation(k, "source counter did not grow by one",
                                 f"process {j}: {prev_c} -> {c}")
            prev_c = c
    return None


def check_leader_timeliness(trace, quarter: float = 0.25) -> Violation | None:
    """Every leader of the window reached every process computing the round.

    Informational: short windows right after stabilization routinely contain
    leaders whose links are not yet timely.
    """
    ix = _index(trace)
    win = ess_window(ix, quarter)
    if win is None:
        return None
    for k, leaders in leaders_by_round(ix, *win).items():
        recips = ix.compute_rounds.get(k, [])
        for p in sorted(leaders):
            m = ix.payload.get((p, k))
            missing = [j for j in recips if m not in ix.inbox[j, k]]
            if missing:
                return Violation(k, "leader not timely", f"leader {p} missed {missing}")
    return None


def _source_counter(state: dict, history) -> int:
    hist = tuple(history)
    return next((cnt for h, cnt in state.get("C_current", ()) if tuple(h) == hist), 0)


def source_counter_series(trace) -> dict:
    """Counter of the stable source's history at every process, per round."""
    ix = _index(trace)
    src = ix.header.get("stable_source")
    out = defaultdict(list)
    if src is None:
        return {}
    for (j, k), st in sorted(ix.mid.items(), key=lambda x: (x[0][1], x[0][0])):
        s_state = ix.mid.get((src, k))
        if s_state is None or "C_current" not in st:
            continue
        out[j].append((k, _source_counter(st, s_state["history"])))
    return dict(out)
