import pytest

from anonrounds import checks as C
from anonrounds.consensus_es import EsConsensus
from anonrounds.emulation import Emulator, Flood, OracleBackend, check_progress, inner_horizon, run_emulation
from anonrounds.giraf import HarnessError
from anonrounds.schedule import generate_schedule
from anonrounds.weakset import check_weakset_trace


def test_boot_enqueues_one_send_per_process():
    emu = Emulator(lambda i: Flood(i), 3, 5)
    emu.backend = OracleBackend(emu, 0, [None] * 3)
    for i in range(3):
        emu.boot(i, 0)
    assert len(emu.trace.of_type("add_start")) == 3
    assert sorted(emu.waiting) == [0, 1, 2]


def test_double_boot_is_harness_error():
    emu = Emulator(lambda i: Flood(i), 1, 5)
    emu.backend = OracleBackend(emu, 0, [None])
    emu.boot(0, 0)
    with pytest.raises(HarnessError):
        emu.boot(0, 0)


def test_single_process_round_trip():
    tr = run_emulation(lambda i: Flood(7), 1, 3, "oracle", seed=0)
    kinds = [e["type"] for e in tr.events][:6]
    assert kinds == ["end_of_round", "add_start", "add_end", "get", "deliver", "compute"]
    assert [e["round"] for e in tr.of_type("end_of_round")] == [1, 2, 3]


def test_no_duplicate_deliveries():
    tr = run_emulation(lambda i: Flood(i), 3, 10, "oracle", seed=4)
    seen = set()
    for e in tr.of_type("deliver"):
        key = (e["proc"], e["round"], e["bundle"])
        assert key not in seen
        seen.add(key)


@pytest.mark.parametrize("backend", ["oracle", "network"])
@pytest.mark.parametrize("seed", range(8))
def test_emulated_traces_are_ms(backend, seed):
    n, H = 4, 12
    vals = [seed, 3, 1, 4]
    if backend == "oracle":
        tr = run_emulation(lambda i: EsConsensus(vals[i]), n, H, backend, seed=seed,
                           crash_round=[None, 5, None, None], header={"values": vals})
    else:
        s = generate_schedule("MS", n, inner_horizon(H, 5), 1, seed)
        tr = run_emulation(lambda i: EsConsensus(vals[i]), n, H, backend, seed=seed, sched=s,
                           header={"values": vals})
    assert tr.header["emulated"] is True
    for t in (tr, tr.reloaded()):
        assert C.validate_trace_env(t, "MS") is None
        assert check_progress(t) is None
        assert C.check_agreement(t) is None and C.check_validity(t) is None
        assert check_weakset_trace(t) is None


def test_first_finisher_is_source():
    tr = run_emulation(lambda i: Flood(i), 3, 8, "oracle", seed=9)
    ix = C.TraceIndex(tr)
    for k in ix.compute_rounds:
        assert ix.sources(k)


class EarlyReturn(OracleBackend):
    """Broken weak-set: adds return before taking effect."""

    def start_add(self, i, pair, tick):
        self._at(tick, "done", i)
        self._at(tick + 1 + self.rng.randint(0, self.span[i]), "effect", i, pair)


def test_broken_backend_breaks_ms():
    broken = 0
    for seed in range(20):
        emu = Emulator(lambda i: Flood(i), 3, 8)
        emu.backend = EarlyReturn(emu, seed, [None] * 3)
        tr = emu.backend.run()
        if C.validate_trace_env(tr, "MS") is not None:
            broken += 1
            assert check_weakset_trace(tr) is not None
    assert broken > 0
