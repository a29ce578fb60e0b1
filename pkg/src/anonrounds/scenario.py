"""Scenarios, single runs, batch fuzzing and trace re-checking.

A scenario file is a JSON object tagged ``"schema": "anonrounds-scenario/1"``:

    algorithm   ES | ESS | WEAKSET | EMULATION
    env         MS | ES | ESS         (schedule the run is drawn from)
    n           number of processes
    values      initial values, one per process (consensus and EMULATION)
    crashes     crash budget (int) or explicit {"proc": crash_round}
    k_stab      stabilization round (ES/ESS; drawn when null)
    stable_source                      (ESS; drawn when null)
    horizon     rounds (defaults: 60 under MS, K+20 under ES, 4K+100 under ESS)
    mode        lockstep | skewed
    seed        schedule and interleaving seed
    deadline    termination bound; defaults to K+8 for ES under ES and to the
                horizon for ESS under ESS, no termination check otherwise
    p_timely    probability that a non-source link is timely
    d_max       maximum lateness (rounds) of a late link
    register    WEAKSET only: drive a register over the weak-set
    backend     EMULATION only: oracle | network
    app         EMULATION only: ES | ESS | FLOOD (automaton run on top)
    output      where to write the trace (optional)

The same checker function serves live runs and stored traces, so checking a
written trace reproduces the verdicts of the run that produced it.
"""

from __future__ import annotations

import json
import random
import warnings
from dataclasses import asdict, dataclass, field, fields
from multiprocessing import Pool
from pathlib import Path

from . import checks as C
from .consensus_es import EsConsensus
from .consensus_ess import EssConsensus
from .emulation import BACKENDS, Flood, check_progress, inner_horizon, run_emulation
from .schedule import ENV_KINDS, ScheduleError, generate_schedule
from .sim import Simulation
from .trace import Trace, TraceFormatError
from .weakset import WeakSetAutomaton, Workload, check_adds_complete, check_register, check_weakset_trace

SCENARIO_SCHEMA = "anonrounds-scenario/1"
ALGORITHMS = ("ES", "ESS", "WEAKSET", "EMULATION")
MODES = ("lockstep", "skewed")


class ScenarioError(ValueError):
    """Bad scenario configuration (CLI exit code 2)."""


@dataclass
class Scenario:
    algorithm: str = "ES"
    env: str = "MS"
    n: int = 3
    values: list = field(default_factory=list)
    crashes: int | dict = 0
    k_stab: int | None = None
    stable_source: int | None = None
    horizon: int | None = None
    mode: str = "lockstep"
    seed: int = 0
    deadline: int | None = None
    p_timely: float = 0.3
    d_max: int = 5
    register: bool = False
    backend: str = "oracle"
    app: str = "ES"
    output: str | None = None

    def validate(self, template: bool = False) -> "Scenario":
        """Raise :class:`ScenarioError` on bad fields.  Fuzz templates may
        omit ``values`` (they are drawn per run)."""
        if self.algorithm not in ALGORITHMS:
            raise ScenarioError(f"algorithm must be one of {ALGORITHMS}")
        if self.env not in ENV_KINDS:
            raise ScenarioError(f"env must be one of {ENV_KINDS}")
        if self.mode not in MODES:
            raise ScenarioError(f"mode must be one of {MODES}")
        if self.n < 1:
            raise ScenarioError("n must be at least 1")
        if self.needs_values and len(self.values) != self.n and not (template and not self.values):
            raise ScenarioError(f"expected {self.n} values, got {len(self.values)}")
        if any(not isinstance(v, int) or isinstance(v, bool) for v in self.values):
            raise ScenarioError("values must be integers")
        if self.algorithm == "WEAKSET" and self.mode != "lockstep":
            raise ScenarioError("weak-set workloads run in lockstep mode only")
        if self.algorithm == "EMULATION":
            if self.backend not in BACKENDS:
                raise ScenarioError(f"backend must be one of {BACKENDS}")
            if self.app not in ("ES", "ESS", "FLOOD"):
                raise ScenarioError("app must be ES, ESS or FLOOD")
        if self.horizon is not None and self.horizon < 1:
            raise ScenarioError("horizon must be positive")
        return self

    @property
    def needs_values(self) -> bool:
        return self.algorithm in ("ES", "ESS", "EMULATION")

    def to_dict(self) -> dict:
        return {"schema": SCENARIO_SCHEMA, **asdict(self)}

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        if not isinstance(raw, dict):
            raise ScenarioError("a scenario is a JSON object")
        raw = dict(raw)
        schema = raw.pop("schema", SCENARIO_SCHEMA)
        if schema != SCENARIO_SCHEMA:
            raise ScenarioError(f"unknown scenario schema {schema!r}")
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ScenarioError(f"unknown scenario fields: {sorted(extra)}")
        return cls(**raw).validate()

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
        return cls.from_dict(raw)


# -- verdicts -----------------------------------------------------------------


@dataclass
class CheckReport:
    verdicts: dict = field(default_factory=dict)  # property -> None | violation text
    info: dict = field(default_factory=dict)  # informational checks, never fail a run
    decisions: dict = field(default_factory=dict)  # proc -> [round, value]
    counts: dict = field(default_factory=dict)  # event type -> count

    @property
    def ok(self) -> bool:
        return all(v is None for v in self.verdicts.values())

    @property
    def decided_value(self):
        vals = {v for _, v in self.decisions.values()}
        return next(iter(vals)) if len(vals) == 1 else None

    @property
    def failures(self) -> dict:
        return {k: v for k, v in self.verdicts.items() if v is not None}

    def to_dict(self) -> dict:
        return {"ok": self.ok, "verdicts": self.verdicts, "info": self.info,
                "decisions": {str(p): d for p, d in sorted(self.decisions.items())},
                "counts": self.counts}

    def lines(self) -> list[str]:
        out = [f"{name}\t{'OK' if v is None else 'VIOLATION'}\t{v or ''}"
               for name, v in self.verdicts.items()]
        out += [f"{name}\tINFO\t{v or 'OK'}" for name, v in self.info.items()]
        return out


def _deadline(head: dict) -> int | None:
    if head.get("deadline") is not None:
        return head["deadline"]
    alg, env, k = head.get("algorithm"), head.get("env"), head.get("k_stab")
    if alg == "ES" and env == "ES" and k is not None:
        return k + 8
    if alg == "ESS" and env == "ESS":
        return head.get("horizon")
    return None


def property_names(head: dict) -> list[str]:
    """Checks that apply to a trace with this header."""
    alg = head.get("algorithm")
    emulated = bool(head.get("emulated"))
    app = head.get("app") if emulated else alg
    names = ["env", "fairness"]
    if not emulated:
        names.append("reliability")
    if alg == "WEAKSET":
        names += ["weakset_oracle", "adds_complete", "written_proposed"]
        if head.get("register"):
            names.append("register")
        return names
    if emulated:
        names += ["weakset_oracle", "progress"]
    if app in ("ES", "ESS"):
        names += ["validity", "agreement", "written_proposed", "written_old_written", "decide_guard"]
    if app == "ESS":
        names.append("bot_never_decided")
    if not emulated and _deadline(head) is not None:
        names.append("termination")
    if not emulated and alg == "ESS" and head.get("env") == "ESS":
        names.append("ess_window")
    return names


def _run_check(name: str, ix: C.TraceIndex, trace: Trace, head: dict):
    env = "MS" if head.get("emulated") else head.get("env")
    if name == "env":
        return C.validate_trace_env(ix, env, k_stab=head.get("k_stab"),
                                    stable_source=head.get("stable_source"))
    table = {
        "fairness": lambda: C.check_fairness(ix),
        "reliability": lambda: C.check_reliability(ix),
        "validity": lambda: C.check_validity(ix),
        "agreement": lambda: C.check_agreement(ix),
        "bot_never_decided": lambda: C.check_bot_never_decided(ix),
        "termination": lambda: C.check_termination(ix, _deadline(head)),
        "written_proposed": lambda: C.check_written_proposed(ix, conditioned=head.get("algorithm") != "WEAKSET"),
        "written_old_written": lambda: C.check_written_old_written(ix),
        "decide_guard": lambda: C.check_decide_guard(ix),
        "ess_window": lambda: C.check_ess_window(ix),
        "leader_timeliness": lambda: C.check_leader_timeliness(ix),
        "weakset_oracle": lambda: check_weakset_trace(trace),
        "adds_complete": lambda: check_adds_complete(trace),
        "register": lambda: check_register(trace),
        "progress": lambda: check_progress(ix),
    }
    if name not in table:
        raise ScenarioError(f"unknown property {name!r}")
    return table[name]()


ALL_PROPERTIES = ("env", "fairness", "reliability", "validity", "agreement", "bot_never_decided",
                  "termination", "written_proposed", "written_old_written", "decide_guard",
                  "ess_window", "leader_timeliness", "weakset_oracle", "adds_complete",
                  "register", "progress")


def check_trace(trace: Trace, properties: list[str] | None = None) -> CheckReport:
    """Run the applicable checkers (or the requested ones) over ``trace``."""
    head = trace.header
    names = list(properties) if properties else property_names(head)
    ix = C.TraceIndex(trace)
    rep = CheckReport()
    for name in names:
        v = _run_check(name, ix, trace, head)
        rep.verdicts[name] = None if v is None else str(v)
    if not properties and "ess_window" in names:
        v = _run_check("leader_timeliness", ix, trace, head)
        rep.info["leader_timeliness"] = None if v is None else str(v)
    rep.decisions = {p: [k, v] for p, (k, v) in sorted(ix.decided.items())}
    counts: dict = {}
    for ev in trace.events:
        counts[ev["type"]] = counts.get(ev["type"], 0) + 1
    rep.counts = dict(sorted(counts.items()))
    return rep


# -- single runs --------------------------------------------------------------


def default_horizon(sc: Scenario, k_stab: int | None) -> int:
    if sc.horizon is not None:
        return sc.horizon
    if sc.env == "ESS":
        return 4 * k_stab + 100
    if sc.env == "ES":
        return k_stab + 20
    return 60


def _factory(kind: str, values: list):
    if kind == "ES":
        return lambda i: EsConsensus(values[i])
    if kind == "ESS":
        return lambda i: EssConsensus(values[i])
    if kind == "FLOOD":
        return lambda i: Flood(values[i])
    raise ScenarioError(f"no automaton for {kind!r}")


def _warn_env(sc: Scenario) -> None:
    claims = {"ES": "ES", "ESS": "ESS"}
    need = claims.get(sc.algorithm)
    if need and sc.env != need:
        warnings.warn(f"{sc.algorithm} under {sc.env}: safety only, termination is not checked",
                      stacklevel=3)


def build_trace(sc: Scenario) -> Trace:
    sc.validate()
    rng = random.Random(sc.seed)
    k_stab = sc.k_stab
    if sc.env in ("ES", "ESS") and k_stab is None:
        k_stab = rng.randint(1, 20)
    horizon = default_horizon(sc, k_stab)
    budget, pinned = (0, sc.crashes) if isinstance(sc.crashes, dict) else (sc.crashes, None)
    head = {"algorithm": sc.algorithm, "values": list(sc.values), "deadline": sc.deadline,
            "register": sc.register, "scenario_seed": sc.seed}
    try:
        if sc.algorithm == "EMULATION":
            head.update(app=sc.app, algorithm="EMULATION")
            factory = _factory(sc.app, sc.values)
            if sc.backend == "oracle":
                crash_round = [None] * sc.n
                if pinned:
                    for p, c in pinned.items():
                        crash_round[int(p)] = int(c)
                else:
                    for p in rng.sample(range(sc.n), budget):
                        crash_round[p] = rng.randint(1, horizon)
                return run_emulation(factory, sc.n, horizon, "oracle", seed=sc.seed,
                                     crash_round=crash_round, header=head)
            inner = inner_horizon(horizon, sc.d_max)
            sched = generate_schedule("MS", sc.n, inner, budget, sc.seed, d_max=sc.d_max,
                                      p_timely=sc.p_timely, crash_rounds=pinned)
            return run_emulation(factory, sc.n, horizon, "network", seed=sc.seed, sched=sched,
                                 header=head)
        sched = generate_schedule(sc.env, sc.n, horizon, budget, sc.seed, k_stab=k_stab,
                                  stable_source=sc.stable_source, d_max=sc.d_max,
                                  p_timely=sc.p_timely, crash_rounds=pinned)
    except ScheduleError as exc:
        raise ScenarioError(str(exc)) from None
    if sc.algorithm == "WEAKSET":
        sim = Simulation(sched, lambda i: WeakSetAutomaton(), mode="lockstep", seed=sc.seed, header=head)
        sim.observers.append(Workload(seed=sc.seed, register=sc.register))
        return sim.run()
    sim = Simulation(sched, _factory(sc.algorithm, sc.values), mode=sc.mode, seed=sc.seed, header=head)
    return sim.run()


def run(sc: Scenario, write: bool = True) -> tuple[Trace, CheckReport]:
    """One seeded run: trace, verdicts, and the trace file if ``output`` is set."""
    _warn_env(sc)
    trace = build_trace(sc)
    report = check_trace(trace)
    if write and sc.output:
        trace.write(sc.output)
    return trace, report


def check_file(path, properties: list[str] | None = None) -> CheckReport:
    """Re-check a stored trace (raises :class:`~anonrounds.trace.TraceFormatError`)."""
    trace = Trace.read(path)
    try:
        return check_trace(trace, properties)
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise TraceFormatError(f"{path}: malformed record ({exc!r})") from None


# -- fuzzing ------------------------------------------------------------------


@dataclass
class RunResult:
    seed: int
    n: int
    mode: str
    k_stab: int | None
    crashes: int
    decided: int
    first_decision: int | None
    last_decision: int | None
    failures: dict
    info: dict

    @property
    def ok(self) -> bool:
        return not self.failures


@dataclass
class FuzzSummary:
    template: dict
    seed: int
    results: list

    @property
    def runs(self) -> int:
        return len(self.results)

    @property
    def failed(self) -> list:
        return [r for r in self.results if not r.ok]

    @property
    def ok(self) -> bool:
        return not self.failed

    @property
    def min_failing_seed(self) -> int | None:
        return min((r.seed for r in self.failed), default=None)

    def violation_counts(self) -> dict:
        out: dict = {}
        for r in self.results:
            for name in r.failures:
                out[name] = out.get(name, 0) + 1
        return dict(sorted(out.items()))

    def lines(self) -> list[str]:
        decided = sum(1 for r in self.results if r.decided)
        out = [f"runs\t{self.runs}", f"failed\t{len(self.failed)}", f"runs_with_decision\t{decided}"]
        for name, c in self.violation_counts().items():
            out.append(f"violations:{name}\t{c}")
        if self.min_failing_seed is not None:
            r = next(r for r in self.results if r.seed == self.min_failing_seed)
            first = next(iter(r.failures.items()))
            out.append(f"min_failing_seed\t{r.seed}\t{first[0]}: {first[1]}")
        return out


def derive(template: Scenario, run_seed: int, mode_mix: bool = False) -> Scenario:
    """Vary a template within its bounds: ``n``, ``k_stab`` and crash budget
    act as maxima, values are drawn when the template gives none."""
    rng = random.Random(run_seed)
    n = rng.randint(1, template.n)
    values = list(template.values[:n]) if len(template.values) >= n else [rng.randint(0, 9) for _ in range(n)]
    limit = n - 1
    if isinstance(template.crashes, dict):
        crashes = dict(template.crashes) if n == template.n else 0
    else:
        crashes = rng.randint(0, min(limit, template.crashes if template.crashes >= 0 else limit))
    k_stab = rng.randint(1, template.k_stab) if template.k_stab else None
    if template.env in ("ES", "ESS") and k_stab is None:
        k_stab = rng.randint(1, 20)
    stable = None
    if template.env == "ESS":
        stable = rng.randrange(n)
    mode = rng.choice(MODES) if mode_mix else template.mode
    if template.algorithm == "WEAKSET":
        mode = "lockstep"
    horizon = template.horizon
    if template.env == "ES" and template.horizon is None:
        horizon = k_stab + 20
    return Scenario(
        algorithm=template.algorithm, env=template.env, n=n, values=values, crashes=crashes,
        k_stab=k_stab, stable_source=stable, horizon=horizon, mode=mode, seed=run_seed,
        deadline=template.deadline, p_timely=template.p_timely, d_max=template.d_max,
        register=template.register, backend=template.backend, app=template.app,
    )


def run_one(sc: Scenario) -> RunResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        trace = build_trace(sc)
    rep = check_trace(trace)
    rounds = [k for k, _ in rep.decisions.values()]
    crashes = sum(1 for ev in trace.events if ev["type"] == "crash")
    return RunResult(
        seed=sc.seed, n=sc.n, mode=sc.mode, k_stab=trace.header.get("k_stab"), crashes=crashes,
        decided=len(rep.decisions), first_decision=min(rounds, default=None),
        last_decision=max(rounds, default=None), failures=rep.failures, info=rep.info,
    )


def run_seeds(master_seed: int, runs: int) -> list[int]:
    rng = random.Random(master_seed)
    return [rng.randrange(2**31) for _ in range(runs)]


def fuzz(template: Scenario, runs: int, seed: int, *, mode_mix: bool = False, jobs: int = 1) -> FuzzSummary:
    """``runs`` independent runs derived from ``template``; sorted by run seed."""
    template.validate(template=True)
    scenarios = [derive(template, s, mode_mix) for s in run_seeds(seed, runs)]
    if jobs > 1:
        with Pool(jobs) as pool:
            results = pool.map(run_one, scenarios, chunksize=max(1, runs // (4 * jobs)))
    else:
        results = [run_one(sc) for sc in scenarios]
    results.sort(key=lambda r: r.seed)
    return FuzzSummary(template=template.to_dict(), seed=seed, results=results)
