"""Consensus for the eventually-synchronous environment.

Each round a process broadcasts its ``proposed`` set.  A value is *written*
once it shows up in every set received in a round: at least one of those
sets came from the round's source, so every other process saw it too.  Even
rounds either decide (own value proposed and written last round) or adopt
the largest written value.
"""

from __future__ import annotations

from dataclasses import dataclass

from .giraf import Decide
from .values import encode

EMPTY = frozenset()


@dataclass
class EsState:
    val: int
    written: frozenset = EMPTY
    written_old: frozenset = EMPTY
    proposed: frozenset = EMPTY
    # (val, written, writtenOld, proposed) right after the proposed-union line
    mid: tuple | None = None


def es_initialize(v: int) -> tuple[EsState, frozenset]:
    state = EsState(val=v)
    return state, state.proposed


def es_compute(state: EsState, k: int, received: frozenset, mutation: str | None = None):
    """One ``compute`` step over the round-``k`` message set.

    Mutates ``state`` and returns the next payload or a :class:`Decide`.
    ``mutation="union_written"`` replaces the intersection with a union; it
    exists only so the lemma checkers can be shown to catch a broken round.
    """
    if mutation == "union_written":
        written = frozenset().union(*received)
    else:
        written = frozenset.intersection(*received)
    proposed = frozenset().union(*received) | state.proposed
    state.written = written
    state.proposed = proposed
    state.mid = (state.val, written, state.written_old, proposed)
    if k % 2 == 0:
        single = frozenset((state.val,))
        if proposed == state.written_old == single:
            return Decide(state.val)
        if written:
            state.val = max(written)
        state.proposed = frozenset((state.val,))
    state.written_old = written
    return state.proposed


def _state_record(state: EsState) -> dict:
    return {
        "val": state.val,
        "written": encode(state.written),
        "writtenOld": encode(state.written_old),
        "proposed": encode(state.proposed),
    }


class EsConsensus:
    """GIRAF automaton wrapper around :func:`es_compute`."""

    algorithm = "ES"

    def __init__(self, value: int, mutation: str | None = None):
        self.initial = value
        self.mutation = mutation
        self.state, self._first = es_initialize(value)

    def initialize(self):
        return self._first

    def compute(self, k, inbox):
        return es_compute(self.state, k, inbox[k], self.mutation)

    def snapshot(self, full: bool = True) -> dict:
        return _state_record(self.state)

    def mid_snapshot(self) -> dict:
        val, written, written_old, proposed = self.state.mid
        return _state_record(EsState(val, written, written_old, proposed))
