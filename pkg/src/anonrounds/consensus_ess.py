"""Consensus for the eventually-stable-source environment.

Processes have no identities, so the sequence of values a process has
proposed (its *history*) stands in for one.  Every message carries the
sender's history and a counter map over histories; counters of histories that
keep arriving on time grow by one per round.  A process whose own history has
a maximal counter behaves as a leader and proposes its value, the others
propose BOT unless they already agree with what they received.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

from .giraf import Decide
from .values import BOT, encode, value_key


class History:
    """Interned, immutable sequence of proposal values.

    Equal sequences are the same object, so equality and hashing are O(1) and
    prefix tests are a single index into the ancestor path.
    """

    __slots__ = ("parent", "value", "depth", "path", "_hash", "__weakref__")

    _table: "weakref.WeakValueDictionary[tuple, History]" = weakref.WeakValueDictionary()

    def __init__(self, parent: "History | None", value: int):
        self.parent = parent
        self.value = value
        if parent is None:
            self.depth = 1
            self.path = (self,)
            self._hash = hash((0x4157, value))
        else:
            self.depth = parent.depth + 1
            self.path = parent.path + (self,)
            self._hash = hash((parent._hash, value))

    @classmethod
    def make(cls, parent: "History | None", value: int) -> "History":
        key = (parent, value)
        node = cls._table.get(key)
        if node is None:
            node = cls(parent, value)
            cls._table[key] = node
        return node

    @classmethod
    def of(cls, values: Iterable[int]) -> "History":
        node = None
        for v in values:
            node = cls.make(node, v)
        if node is None:
            raise ValueError("a history is never empty")
        return node

    def append(self, value: int) -> "History":
        return History.make(self, value)

    def values(self) -> tuple:
        return tuple(h.value for h in self.path)

    def __len__(self):
        return self.depth

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return self is other

    def __lt__(self, other: "History"):
        return self.values() < other.values()

    def __repr__(self):
        return f"History({list(self.values())})"

    def __canonical__(self):
        return list(self.values())

    def __reduce__(self):
        return (History.of, (self.values(),))


def as_history(h) -> History:
    return h if isinstance(h, History) else History.of(h)


def is_prefix(h1, h2) -> bool:
    """True iff ``h1`` is a (not necessarily proper) prefix of ``h2``."""
    a, b = as_history(h1), as_history(h2)
    return a.depth <= b.depth and b.path[a.depth - 1] is a


@dataclass(frozen=True)
class EssMessage:
    proposed: frozenset
    history: History
    # (history, count) pairs with count > 0; absent histories count as zero
    counters: frozenset = frozenset()

    @cached_property
    def counter_map(self) -> dict:
        return dict(self.counters)

    def __canonical__(self):
        pairs = sorted(self.counters, key=lambda hc: hc[0].values())
        return {
            "proposed": encode(self.proposed),
            "history": list(self.history.values()),
            "C": [[list(h.values()), c] for h, c in pairs],
        }


def freeze_counters(counters: dict) -> frozenset:
    return frozenset((h, c) for h, c in counters.items() if c > 0)


def counter_merge(messages: Iterable[EssMessage]) -> dict:
    """New counter map from one round's received messages.

    First every counter takes the minimum over all received maps (absent keys
    read as 0, so only keys present everywhere survive).  Then each received
    history gets one more than the largest surviving counter among its
    prefixes, itself included.
    """
    msgs = list(messages)
    if not msgs:
        raise ValueError("counter_merge needs at least one message")
    maps = sorted((m.counter_map for m in msgs), key=len)
    first, rest = maps[0], maps[1:]
    merged: dict = {}
    for h, c in first.items():
        for other in rest:
            oc = other.get(h)
            if oc is None:
                break
            if oc < c:
                c = oc
        else:
            merged[h] = c
    step1 = list(merged.items())
    for m in msgs:
        hist = m.history
        path, depth = hist.path, hist.depth
        best = 0
        for h, c in step1:
            if c > best and h.depth <= depth and path[h.depth - 1] is h:
                best = c
        merged[hist] = best + 1
    return merged


def leader_predicate(counters: dict, own, universe: Iterable | None = None) -> bool:
    """``C[own] >= C[h]`` for every history ``h`` with an explicit counter.

    ``universe`` widens the quantifier to extra histories (for example every
    history ever heard of); they read as 0 when absent, so the answer never
    changes, which the test-suite checks.
    """
    own = as_history(own)
    mine = counters.get(own, 0)
    if any(c > mine for c in counters.values()):
        return False
    if universe is not None:
        return all(counters.get(as_history(h), 0) <= mine for h in universe)
    return True


@dataclass
class EssState:
    val: int
    history: History
    counters: dict = field(default_factory=dict)
    written: frozenset = frozenset()
    written_old: frozenset = frozenset()
    proposed: frozenset = frozenset()
    leader: bool = True
    mid: tuple | None = None


def ess_initialize(v: int) -> tuple[EssState, EssMessage]:
    state = EssState(val=v, history=History.make(None, v))
    return state, EssMessage(state.proposed, state.history, frozenset())


def _within(proposed: frozenset, val) -> bool:
    return all(x is BOT or x == val for x in proposed)


def ess_compute(state: EssState, k: int, received: Sequence[EssMessage] | frozenset,
                mutation: str | None = None):
    """One ``compute`` step; mutates ``state``, returns a message or :class:`Decide`."""
    sets = [m.proposed for m in received]
    if mutation == "union_written":
        written = frozenset().union(*sets)
    else:
        written = frozenset.intersection(*sets)
    proposed = frozenset().union(*sets) | state.proposed
    counters = counter_merge(received)
    state.written, state.proposed, state.counters = written, proposed, counters
    state.leader = leader_predicate(counters, state.history)
    state.mid = (state.val, written, state.written_old, proposed, state.history, counters, state.leader)
    if k % 2 == 0:
        if state.written_old == frozenset((state.val,)) and _within(proposed, state.val):
            return Decide(state.val)
        real = [x for x in written if x is not BOT]
        if real:
            state.val = max(real)
        if state.leader or _within(proposed, state.val):
            state.proposed = frozenset((state.val,))
        else:
            state.proposed = frozenset((BOT,))
    state.written_old = written
    state.written = state.proposed
    state.history = state.history.append(state.val)
    return EssMessage(state.proposed, state.history, freeze_counters(counters))


def _sets(state_like) -> dict:
    val, written, written_old, proposed = state_like
    return {
        "val": val,
        "written": encode(written),
        "writtenOld": encode(written_old),
        "proposed": encode(proposed),
    }


class EssConsensus:
    """GIRAF automaton wrapper around :func:`ess_compute`."""

    algorithm = "ESS"

    def __init__(self, value: int, mutation: str | None = None):
        self.mutation = mutation
        self.state, self._first = ess_initialize(value)

    def initialize(self):
        return self._first

    def compute(self, k, inbox):
        return ess_compute(self.state, k, inbox[k], self.mutation)

    def snapshot(self, full: bool = True) -> dict:
        """State record; ``full=False`` replaces the counter map by its size."""
        st = self.state
        rec = _sets((st.val, st.written, st.written_old, st.proposed))
        rec["history"] = list(st.history.values())
        if full:
            items = sorted(st.counters.items(), key=lambda hc: hc[0].values())
            rec["C"] = [[list(h.values()), c] for h, c in items]
        else:
            rec["C_size"] = len(st.counters)
        return rec

    def mid_snapshot(self) -> dict:
        """Variables after the counter update of the current round.

        Only counters of histories as long as the sender's current one are
        kept (the ones refreshed this round); the full map would make traces
        quadratic in the horizon.
        """
        val, written, written_old, proposed, history, counters, leader = self.state.mid
        rec = _sets((val, written, written_old, proposed))
        depth = history.depth
        rec["history"] = list(history.values())
        current = sorted((h.values(), c) for h, c in counters.items() if h.depth == depth)
        rec["C_current"] = [[list(h), c] for h, c in current]
        rec["C_own"] = counters.get(history, 0)
        rec["C_max"] = max(counters.values(), default=0)
        rec["leader"] = leader
        return rec


__all__ = [
    "BOT",
    "EssConsensus",
    "EssMessage",
    "EssState",
    "History",
    "counter_merge",
    "ess_compute",
    "ess_initialize",
    "freeze_counters",
    "is_prefix",
    "leader_predicate",
    "value_key",
]
