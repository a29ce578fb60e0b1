"""Randomized properties over generated schedules and runs."""

import warnings

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from anonrounds.checks import check_agreement, check_validity
from anonrounds.consensus_es import EsConsensus
from anonrounds.consensus_ess import EssConsensus, EssMessage, History, counter_merge, freeze_counters, leader_predicate
from anonrounds.scenario import Scenario, check_trace, run
from anonrounds.schedule import Schedule, generate_schedule, validate_schedule
from anonrounds.sim import run_simulation
from anonrounds.trace import Trace
from anonrounds.weakset import OpRecord, oracle_check

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

envs = st.sampled_from(["MS", "ES", "ESS"])


@st.composite
def schedule_args(draw):
    env = draw(envs)
    n = draw(st.integers(1, 5))
    k = draw(st.integers(1, 12)) if env != "MS" else None
    horizon = draw(st.integers(2, 30)) + (k or 0)
    return dict(env_kind=env, n=n, horizon=horizon, crash_budget=draw(st.integers(0, n - 1)),
                seed=draw(st.integers(0, 2**31 - 1)), k_stab=k,
                stable_source=draw(st.integers(0, n - 1)) if env == "ESS" else None,
                p_timely=draw(st.floats(0.0, 1.0)), d_max=draw(st.integers(1, 6)))


@SETTINGS
@given(schedule_args())
def test_generated_schedules_validate(args):
    sched = generate_schedule(**args)
    assert validate_schedule(sched) is None
    again = Schedule.from_records(sched.to_records())
    assert validate_schedule(again) is None
    assert again.to_records() == sched.to_records()


@SETTINGS
@given(schedule_args())
def test_generation_is_deterministic(args):
    assert generate_schedule(**args).to_records() == generate_schedule(**args).to_records()


@st.composite
def scenarios(draw):
    alg = draw(st.sampled_from(["ES", "ESS"]))
    env = draw(envs)
    n = draw(st.integers(1, 4))
    return Scenario(alg, env, n, draw(st.lists(st.integers(0, 9), min_size=n, max_size=n)),
                    crashes=draw(st.integers(0, n - 1)),
                    k_stab=draw(st.integers(1, 8)) if env != "MS" else None,
                    stable_source=draw(st.integers(0, n - 1)) if env == "ESS" else None,
                    horizon=draw(st.integers(5, 40)),
                    mode=draw(st.sampled_from(["lockstep", "skewed"])),
                    seed=draw(st.integers(0, 10**6)))


def _quiet_run(sc):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run(sc, write=False)


@SETTINGS
@given(scenarios())
def test_runs_are_reproducible_and_safe(sc):
    t1, rep = _quiet_run(sc)
    t2, _ = _quiet_run(sc)
    assert t1.dumps() == t2.dumps()
    assert check_agreement(t1) is None and check_validity(t1) is None
    assert all(v is None for k, v in rep.verdicts.items() if k in ("agreement", "validity"))


@SETTINGS
@given(scenarios())
def test_reloaded_trace_checks_identically(sc):
    tr, rep = _quiet_run(sc)
    assert check_trace(Trace.from_lines(tr.to_lines())).to_dict() == rep.to_dict()


def _permuted(sched: Schedule, pi: list) -> Schedule:
    n = sched.n
    timely, late = [sched.timely[0]], [sched.late[0]]
    for k in range(1, sched.horizon + 1):
        t = [[False] * n for _ in range(n)]
        d = [[1] * n for _ in range(n)]
        for s in range(n):
            for j in range(n):
                t[pi[s]][pi[j]] = sched.timely[k][s][j]
                d[pi[s]][pi[j]] = sched.late[k][s][j]
        timely.append(t)
        late.append(d)
    crash_round = [None] * n
    for p in range(n):
        crash_round[pi[p]] = sched.crash_round[p]
    return Schedule(env=sched.env, n=n, horizon=sched.horizon, timely=timely, late=late,
                    crash_round=crash_round,
                    sources=[tuple(pi[s] for s in row) for row in sched.sources],
                    k_stab=sched.k_stab,
                    stable_source=None if sched.stable_source is None else pi[sched.stable_source],
                    seed=sched.seed, d_max=sched.d_max)


def _decisions(trace) -> dict:
    return {e["proc"]: (e["round"], e["value"]) for e in trace.of_type("decide")}


@SETTINGS
@given(schedule_args(), st.data(), st.sampled_from([EsConsensus, EssConsensus]))
def test_relabeling_processes_relabels_the_run(args, data, cls):
    """Anonymity: outcomes depend on the link pattern, not on the labels."""
    sched = generate_schedule(**args)
    n = sched.n
    values = data.draw(st.lists(st.integers(0, 9), min_size=n, max_size=n))
    pi = data.draw(st.permutations(range(n)))
    moved = [None] * n
    for i in range(n):
        moved[pi[i]] = values[i]
    base = _decisions(run_simulation(sched, lambda i: cls(values[i]), record=False))
    perm = _decisions(run_simulation(_permuted(sched, pi), lambda i: cls(moved[i]), record=False))
    assert perm == {pi[p]: d for p, d in base.items()}


# -- counter merge and leader predicate --------------------------------------------

histories = st.lists(st.integers(0, 3), min_size=1, max_size=4).map(History.of)


@st.composite
def messages(draw):
    counters = draw(st.dictionaries(histories, st.integers(1, 6), max_size=4))
    return EssMessage(frozenset(), draw(histories), freeze_counters(counters))


@SETTINGS
@given(st.lists(messages(), min_size=1, max_size=4))
def test_counter_merge_shape(msgs):
    merged = counter_merge(msgs)
    for m in msgs:
        assert merged[m.history] >= 1
    received = {m.history for m in msgs}
    for h, c in merged.items():
        if h not in received:
            assert c == min(m.counter_map.get(h, 0) for m in msgs)
    assert counter_merge(list(reversed(msgs))) == merged


@SETTINGS
@given(st.dictionaries(histories, st.integers(1, 9), max_size=5), histories,
       st.lists(histories, max_size=5))
def test_leader_predicate_ignores_absent_histories(counters, own, extra):
    assert leader_predicate(counters, own) == leader_predicate(counters, own, universe=extra)
    assert leader_predicate(counters, own, universe=list(counters) + extra) == leader_predicate(counters, own)


# -- weak-set oracle ------------------------------------------------------------------


@st.composite
def linear_histories(draw):
    """Operations against a set that each add updates at one instant inside its interval."""
    n_ops = draw(st.integers(1, 12))
    events, t = [], 0
    for op in range(1, n_ops + 1):
        t += draw(st.integers(0, 3))
        if draw(st.booleans()):
            length = draw(st.integers(0, 5))
            events.append(OpRecord(op, 0, "add", t, t + length, value=draw(st.integers(0, 5))))
        else:
            events.append(OpRecord(op, 0, "get", t, t))
    effect = {o.op: draw(st.integers(o.start, o.end)) for o in events if o.kind == "add"}
    for g in events:
        if g.kind == "get":
            g.result = frozenset(a.value for a in events if a.kind == "add" and effect[a.op] < g.start)
    return events


@SETTINGS
@given(linear_histories())
def test_linearizable_histories_pass_the_oracle(log):
    assert oracle_check(log) is None


@SETTINGS
@given(linear_histories(), st.integers(100, 200))
def test_oracle_rejects_phantoms(log, phantom):
    gets = [o for o in log if o.kind == "get"]
    if gets:
        gets[-1].result = gets[-1].result | {phantom}
        assert oracle_check(log).rule == "get returned a value never added"
