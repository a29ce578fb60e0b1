import pytest

from anonrounds.schedule import Schedule, ScheduleError, generate_schedule, validate_schedule


def test_single_process_is_its_own_source():
    s = generate_schedule("MS", 1, 10, 0, seed=4)
    assert all(s.timely[k][0][0] for k in range(1, 11))
    assert validate_schedule(s) is None


def test_es_all_links_timely_after_k():
    s = generate_schedule("ES", 3, 20, 0, seed=1, k_stab=8)
    for k in range(8, 21):
        assert all(all(row) for row in s.timely[k])
    assert validate_schedule(s) is None


def test_ess_stable_source_timely():
    s = generate_schedule("ESS", 4, 30, 0, seed=2, k_stab=10, stable_source=2)
    for k in range(10, 31):
        assert all(s.timely[k][2])
        assert s.sources[k][0] == 2
    assert validate_schedule(s) is None


def test_ms_round_without_source_is_reported():
    s = generate_schedule("MS", 3, 10, 0, seed=0, p_timely=0.0)
    for snd in range(3):
        s.timely[5][snd] = [j == snd for j in range(3)]
    v = validate_schedule(s)
    assert v.round == 5 and v.rule == "no source"


def test_es_timely_everywhere_ok():
    s = generate_schedule("ES", 3, 10, 0, seed=0, k_stab=1)
    assert validate_schedule(s) is None


def test_ess_stable_source_crash_rejected():
    with pytest.raises(ScheduleError):
        generate_schedule("ESS", 4, 30, seed=0, k_stab=10, stable_source=1, crash_rounds={1: 11})
    s = generate_schedule("ESS", 4, 30, 0, seed=0, k_stab=10, stable_source=1)
    s.crash_round[1] = 11
    assert validate_schedule(s).rule == "stable source crashes"


def test_crash_budget_is_spent_exactly():
    s = generate_schedule("MS", 5, 30, 3, seed=9)
    assert sum(c is not None for c in s.crash_round) == 3
    with pytest.raises(ScheduleError):
        generate_schedule("MS", 3, 10, 3, seed=0)
    s = generate_schedule("MS", 3, 10, 3, seed=0, allow_all_crash=True)
    assert validate_schedule(s) is None


def test_crash_convention():
    s = generate_schedule("MS", 2, 10, seed=0, crash_rounds={1: 4})
    assert s.sends(1, 3) and not s.sends(1, 4)
    assert s.computes(1, 2) and not s.computes(1, 3)


def test_late_delays_in_range():
    s = generate_schedule("MS", 4, 30, 0, seed=3, d_max=2)
    for k in range(1, 31):
        for row in s.late[k]:
            assert all(1 <= d <= 2 for d in row)
    s.late[7][0][1] = 9
    s.timely[7][0][1] = False
    s.sources = list(s.sources)
    s.sources[7] = (2,)
    s.timely[7][2] = [True] * 4
    assert validate_schedule(s).rule == "late delay out of range"


def test_records_round_trip():
    s = generate_schedule("ESS", 3, 15, 1, seed=5, k_stab=4)
    t = Schedule.from_records(s.to_records())
    assert t.to_records() == s.to_records()


def test_same_seed_same_schedule():
    a = generate_schedule("MS", 4, 25, 2, seed=11)
    b = generate_schedule("MS", 4, 25, 2, seed=11)
    assert a.to_records() == b.to_records()
