"""Acceptance criteria at their stated scale and tolerances.

Each test records one PASS/FAIL line (printed in the terminal summary) before
asserting.  Runs are seeded, so every number here is reproducible.
"""

import os
import subprocess
import sys
import warnings
from functools import cache
from pathlib import Path

from anonrounds import checks as C
from anonrounds.consensus_es import EsConsensus
from anonrounds.consensus_ess import EssConsensus
from anonrounds.scenario import Scenario, fuzz, run
from anonrounds.schedule import generate_schedule
from anonrounds.sim import run_simulation
from anonrounds.weakset import EMPTY, RegEntry, read_rule

RESULTS: dict[str, str] = {}
LEMMAS = ("written_proposed", "written_old_written", "decide_guard")
SAFETY = ("validity", "agreement", "bot_never_decided")
GOLDEN = Path(__file__).parent / "golden"


def record(key: str, ok: bool, text: str) -> bool:
    RESULTS[key] = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {text}"
    print(RESULTS[key])
    return ok


def failing(summary, names) -> list:
    return [r for r in summary.results if any(n in r.failures for n in names)]


@cache
def ms_es():
    return fuzz(Scenario("ES", "MS", 6, crashes=5, horizon=60), 10_000, 101, mode_mix=True)


@cache
def ms_ess():
    return fuzz(Scenario("ESS", "MS", 6, crashes=5, horizon=60), 10_000, 102, mode_mix=True)


@cache
def es_es():
    return fuzz(Scenario("ES", "ES", 6, crashes=5, k_stab=30), 1000, 103)


@cache
def ess_ess():
    return fuzz(Scenario("ESS", "ESS", 6, crashes=5, k_stab=20), 1000, 104)


def test_criterion_1_es_safety_under_ms():
    s = ms_es()
    bad = failing(s, SAFETY)
    modes = {m: sum(r.mode == m for r in s.results) for m in ("lockstep", "skewed")}
    ok = record("1", s.runs == 10_000 and not bad and min(modes.values()) > 0,
                f"{s.runs} runs {modes}, {len(bad)} with validity/agreement violations")
    assert ok, [(r.seed, r.failures) for r in bad[:5]]


def test_criterion_2_ess_safety_under_ms():
    s = ms_ess()
    bad = failing(s, SAFETY)
    ok = record("2", s.runs == 10_000 and not bad,
                f"{s.runs} runs, {len(bad)} with validity/agreement/bottom-decision violations")
    assert ok, [(r.seed, r.failures) for r in bad[:5]]


def test_criterion_3_es_termination_by_k_plus_8():
    s = es_es()
    late = failing(s, ("termination",))
    worst = max(r.last_decision - r.k_stab for r in s.results if r.last_decision is not None)
    ok = record("3", s.runs == 1000 and not late and max(r.k_stab for r in s.results) <= 30,
                f"{s.runs} runs, {len(late)} past K+8, worst last decision K+{worst}")
    assert ok, [(r.seed, r.failures) for r in late[:5]]


def test_criterion_4a_ess_termination():
    s = ess_ess()
    undecided = failing(s, ("termination",))
    ok = record("4a", s.runs == 1000 and not undecided,
                f"{s.runs} runs, {s.runs - len(undecided)} decided at every correct process "
                "within 4K+100 rounds")
    assert ok, [(r.seed, r.failures) for r in undecided[:5]]


def test_criterion_4b_ess_windowed_leader_and_counter():
    """Constant leader set and +1 source-counter growth in the final quarter
    of [K, first decision].  The underlying guarantees are asymptotic while
    runs decide a few rounds after K; see the notes for the measured gap."""
    s = ess_ess()
    bad = failing(s, ("ess_window",))
    kinds: dict = {}
    for r in bad:
        rule = r.failures["ess_window"].split(":", 1)[-1].split("(")[0].strip()
        kinds[rule] = kinds.get(rule, 0) + 1
    ok = record("4b", not bad, f"{s.runs} runs, {len(bad)} window violations {kinds}")
    assert ok, [(r.seed, r.failures["ess_window"]) for r in bad[:5]]


def test_criterion_5_lemma_invariants_and_mutation():
    clean = sum(len(failing(s, LEMMAS)) for s in (ms_es(), ms_ess(), es_es(), ess_ess()))
    tripped = {}
    for name, cls in (("ES", EsConsensus), ("ESS", EssConsensus)):
        hits = 0
        for seed in range(100):
            sched = generate_schedule("MS", 4, 30, 0, seed, p_timely=0.1)
            tr = run_simulation(sched, lambda i: cls([1, 5, 2, 9][i], mutation="union_written"))
            if C.check_written_proposed(tr) or C.check_written_old_written(tr):
                hits += 1
        tripped[name] = hits
    ok = record("5", clean == 0 and all(tripped.values()),
                f"{clean} lemma violations over criteria 1-4 runs; mutant tripped "
                f"{tripped['ES']}/100 ES and {tripped['ESS']}/100 ESS runs")
    assert ok


def test_criterion_6_weakset_under_ms():
    s = fuzz(Scenario("WEAKSET", "MS", 6, crashes=5, horizon=60), 1000, 106)
    bad = failing(s, ("weakset_oracle", "adds_complete", "env", "written_proposed"))
    ok = record("6", s.runs == 1000 and not bad,
                f"{s.runs} runs, {len(bad)} with oracle or completion violations")
    assert ok, [(r.seed, r.failures) for r in bad[:5]]


def test_criterion_7_register():
    s = fuzz(Scenario("WEAKSET", "MS", 6, crashes=5, horizon=60, register=True), 500, 107)
    bad = failing(s, ("register", "weakset_oracle"))
    examples = (read_rule([RegEntry(5, frozenset({"a", "b"})), RegEntry(9, frozenset({"c"}))]) == 5
                and read_rule([RegEntry(5, frozenset({"a", "b"})), RegEntry(9, frozenset({"c", "d"}))]) == 9
                and read_rule([]) is EMPTY)
    ok = record("7", s.runs == 500 and not bad and examples,
                f"{s.runs} runs, {len(bad)} illegal reads, read-rule examples {'match' if examples else 'differ'}")
    assert ok, [(r.seed, r.failures) for r in bad[:5]]


def test_criterion_8_ms_emulation():
    lines, bad = [], []
    for backend, seed in (("oracle", 108), ("network", 118)):
        s = fuzz(Scenario("EMULATION", "MS", 6, crashes=5, horizon=20, backend=backend, app="ES"), 500, seed)
        b = failing(s, ("env", "weakset_oracle", "progress") + SAFETY + LEMMAS)
        bad += b
        lines.append(f"{backend} {s.runs} runs/{len(b)} bad")
    ok = record("8", not bad, ", ".join(lines) + " (env MS, weak-set oracle, ES safety)")
    assert ok, [(r.seed, r.failures) for r in bad[:5]]


def test_criterion_9_golden_traces():
    cases = {
        "es_single_value5.jsonl": Scenario("ES", "MS", 1, [5], horizon=10),
        "es_pair_3_7.jsonl": Scenario("ES", "ES", 2, [3, 7], k_stab=1, horizon=10),
        "ess_single_value9.jsonl": Scenario("ESS", "MS", 1, [9], horizon=10),
    }
    same, decided = {}, []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, sc in cases.items():
            trace, rep = run(sc, write=False)
            same[name] = trace.dumps() == (GOLDEN / name).read_text()
            decided.append(rep.decisions)
    ok = record("9", all(same.values()) and decided == [{0: [4, 5]}, {0: [6, 7], 1: [6, 7]}, {0: [4, 9]}],
                f"{sum(same.values())}/3 byte-exact, decisions {decided}")
    assert ok


_DIGEST_SCRIPT = """
import hashlib, warnings
warnings.simplefilter("ignore")
from anonrounds.scenario import Scenario, run
h = hashlib.sha256()
for sc in [Scenario("ES", "MS", 5, [1, 2, 3, 4, 5], crashes=2, horizon=40, seed=3, mode="skewed"),
           Scenario("ESS", "ESS", 4, [7, 1, 7, 2], crashes=1, k_stab=6, stable_source=2, seed=4),
           Scenario("WEAKSET", "MS", 4, crashes=1, horizon=30, seed=5, register=True),
           Scenario("EMULATION", "MS", 3, [4, 8, 1], horizon=10, backend="oracle", seed=6),
           Scenario("EMULATION", "MS", 3, [4, 8, 1], horizon=10, backend="network", seed=6)]:
    h.update(run(sc, write=False)[0].dumps().encode())
print(h.hexdigest())
"""


def test_criterion_10_determinism():
    digests = set()
    for hashseed in ("0", "1", "12345"):
        env = dict(os.environ, PYTHONHASHSEED=hashseed)
        out = subprocess.run([sys.executable, "-c", _DIGEST_SCRIPT], env=env, check=True,
                             capture_output=True, text=True)
        digests.add(out.stdout.strip())
    same_fuzz = fuzz(Scenario("ESS", "MS", 5, crashes=4, horizon=40), 50, 110, mode_mix=True).lines() \
        == fuzz(Scenario("ESS", "MS", 5, crashes=4, horizon=40), 50, 110, mode_mix=True).lines()
    ok = record("10", len(digests) == 1 and same_fuzz,
                f"{len(digests)} distinct trace digest(s) across 3 hash seeds, fuzz repeat identical: {same_fuzz}")
    assert ok

