import pickle

import pytest

from anonrounds.consensus_es import EsConsensus
from anonrounds.giraf import HarnessError, Process, RoundInbox, crash, end_of_round, receive, snapshot
from anonrounds.values import BOT, digest, encode, max_value, value_key


class Const:
    """Automaton that always emits the same payload."""

    def __init__(self, payload):
        self.payload = payload

    def initialize(self):
        return self.payload

    def compute(self, k, inbox):
        return self.payload

    def snapshot(self, full=True):
        return {}

    def mid_snapshot(self):
        return {}


def test_fresh_process_broadcasts_empty_proposal():
    p = Process(0, EsConsensus(5))
    res = end_of_round(p)
    assert res.round == 1 and p.round == 1
    assert res.broadcast.round == 1
    assert res.broadcast.payloads == frozenset({frozenset()})
    assert frozenset() in p.inbox[1]


def test_self_insert_is_idempotent():
    p = Process(0, Const("P"))
    for _ in range(3):
        end_of_round(p)
    receive(p, {"P"}, 4)
    before = p.inbox[4]
    end_of_round(p)  # compute at k=3 emits P into M[4] again
    assert p.inbox[4] == before == frozenset({"P"})


def test_equal_payloads_collapse():
    a, b = Process(0, Const(frozenset({1}))), Process(1, Const(frozenset({1})))
    r = Process(2, Const(frozenset({2})))
    for p in (a, b):
        end_of_round(p)
        end_of_round(p)
    receive(r, end_of_round(a).broadcast.payloads, 3)
    receive(r, end_of_round(b).broadcast.payloads, 3)
    assert r.inbox[3] == frozenset({frozenset({1})})


def test_receive_is_union():
    p = Process(0, Const("x"))
    receive(p, {"A", "B"}, 2)
    receive(p, {"B", "C"}, 2)
    assert p.inbox[2] == {"A", "B", "C"}


def test_receive_on_crashed_is_noop():
    p = Process(0, Const("x"))
    crash(p)
    receive(p, {"A"}, 1)
    assert p.inbox[1] == frozenset()


def test_late_delivery_into_past_round():
    p = Process(0, Const("x"))
    for _ in range(5):
        end_of_round(p)
    receive(p, {"A"}, 2)
    assert "A" in p.inbox[2]
    assert "A" in set(p.inbox.upto(5))
    assert "A" not in set(p.inbox.upto(1))


def test_arrival_log():
    box = RoundInbox()
    box.add(1, ["a", "b"])
    box.add(1, ["a"])
    items, cur = box.arrivals()
    assert items == [(1, "a"), (1, "b")] and cur == 2
    box.add(3, ["c"])
    assert box.arrivals(cur) == ([(3, "c")], 3)


def test_crashed_or_halted_step_is_harness_error():
    p = Process(0, Const("x"))
    crash(p)
    with pytest.raises(HarnessError):
        end_of_round(p)
    q = Process(1, EsConsensus(5))
    while not q.halted:
        end_of_round(q)
        receive(q, q.inbox[q.round], q.round)
    with pytest.raises(HarnessError):
        end_of_round(q)


def test_snapshot_after_init_and_repeatable():
    p = Process(3, EsConsensus(5))
    end_of_round(p)
    s1, s2 = snapshot(p), snapshot(p)
    assert s1 == s2
    assert s1 == {"label": 3, "round": 1,
                  "state": {"val": 5, "written": [], "writtenOld": [], "proposed": []}}


def test_snapshot_retained_after_crash():
    p = Process(0, EsConsensus(5))
    end_of_round(p)
    end_of_round(p)
    before = snapshot(p)
    crash(p)
    assert snapshot(p) == before


def test_round_counter_counts_end_of_rounds():
    p = Process(0, Const("x"))
    for i in range(1, 6):
        end_of_round(p)
        assert p.round == i
        assert "x" in p.inbox[i]


def test_bot_ordering_and_encoding():
    assert sorted([3, BOT, 1], key=value_key) == [BOT, 1, 3]
    assert max_value([BOT, 4, 2]) == 4
    assert encode(frozenset({BOT, 2})) == [2, None]
    assert pickle.loads(pickle.dumps(BOT)) is BOT
    assert hash(BOT) == 0x5EED


def test_digest_is_structural():
    assert digest(frozenset({1, 2})) == digest(frozenset({2, 1}))
    assert digest(frozenset({1})) != digest(frozenset({2}))
    d = digest(frozenset({3}))
    assert digest(d) == d and len(d) == 16
