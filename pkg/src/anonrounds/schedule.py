"""Adversarial schedules for the MS, ES and ESS environments.

A schedule fixes, for every round ``k`` and every ordered pair of processes,
whether the round-``k`` message of the sender reaches the recipient before
the recipient finishes round ``k`` (a *timely* link) or how many rounds late
it arrives otherwise.  It also fixes crash rounds and, per round, the order in
which processes are promoted to source if the preferred one has already
decided and stopped.

Crash convention: ``crash_round[p] = c`` means ``p`` completes ``c - 1``
end-of-round actions and then crashes, so it sends messages for rounds
``1 .. c-1`` and computes rounds ``1 .. c-2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

ENV_KINDS = ("MS", "ES", "ESS")
SCHEDULE_SCHEMA = "anonrounds-schedule/1"


class ScheduleError(ValueError):
    """Infeasible schedule parameters."""


@dataclass(frozen=True)
class Violation:
    round: int | None
    rule: str
    detail: str = ""

    def __str__(self):
        where = f"round {self.round}" if self.round is not None else "schedule"
        return f"{where}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class Schedule:
    env: str
    n: int
    horizon: int
    timely: list  # timely[k][s][j], k = 0..horizon (row 0 unused)
    late: list  # late[k][s][j] in rounds, meaningful only where not timely
    crash_round: list
    sources: list  # sources[k]: preference order of round-k sources
    k_stab: int | None = None
    stable_source: int | None = None
    seed: int = 0
    d_max: int = 5
    meta: dict = field(default_factory=dict)

    def sends(self, p: int, k: int) -> bool:
        """Whether ``p`` is still alive to send its round-``k`` message."""
        c = self.crash_round[p]
        return c is None or c > k

    def computes(self, p: int, k: int) -> bool:
        """Whether ``p`` is still alive to run ``compute`` for round ``k``."""
        c = self.crash_round[p]
        return c is None or c > k + 1

    @property
    def correct(self) -> list[int]:
        return [p for p in range(self.n) if self.crash_round[p] is None]

    def to_records(self) -> list[dict]:
        head = {
            "type": "schedule",
            "schema": SCHEDULE_SCHEMA,
            "env": self.env,
            "n": self.n,
            "horizon": self.horizon,
            "crash_round": list(self.crash_round),
            "k_stab": self.k_stab,
            "stable_source": self.stable_source,
            "seed": self.seed,
            "d_max": self.d_max,
        }
        rows = [head]
        for k in range(1, self.horizon + 1):
            rows.append({
                "type": "round",
                "round": k,
                "timely": [[int(b) for b in row] for row in self.timely[k]],
                "late": [list(row) for row in self.late[k]],
                "sources": list(self.sources[k]),
            })
        return rows

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "Schedule":
        records = list(records)
        head = records[0]
        if head.get("schema") != SCHEDULE_SCHEMA:
            raise ScheduleError(f"unknown schedule schema {head.get('schema')!r}")
        n, horizon = head["n"], head["horizon"]
        timely = [[[False] * n for _ in range(n)]]
        late = [[[1] * n for _ in range(n)]]
        sources = [()]
        for row in records[1:]:
            timely.append([[bool(b) for b in r] for r in row["timely"]])
            late.append([list(r) for r in row["late"]])
            sources.append(tuple(row["sources"]))
        if len(timely) != horizon + 1:
            raise ScheduleError("schedule rows do not match the horizon")
        return cls(
            env=head["env"], n=n, horizon=horizon, timely=timely, late=late,
            crash_round=list(head["crash_round"]), sources=sources,
            k_stab=head["k_stab"], stable_source=head["stable_source"],
            seed=head["seed"], d_max=head["d_max"],
        )


def generate_schedule(
    env_kind: str,
    n: int,
    horizon: int,
    crash_budget: int = 0,
    seed: int = 0,
    *,
    k_stab: int | None = None,
    stable_source: int | None = None,
    d_max: int = 5,
    p_timely: float = 0.3,
    source_policy: str = "round_robin",
    crash_window: tuple[int, int] | None = None,
    crash_rounds: dict | None = None,
    allow_all_crash: bool = False,
) -> Schedule:
    """Draw a schedule satisfying ``env_kind`` from a seeded generator.

    ``crash_budget`` processes crash (the adversary spends its whole budget);
    crash rounds are uniform over ``crash_window`` (default: the whole run).
    ``crash_rounds`` pins them explicitly instead.  Keeping one process alive
    is the default; ``allow_all_crash`` lets every process crash.
    """
    if env_kind not in ENV_KINDS:
        raise ScheduleError(f"unknown environment {env_kind!r}")
    if n < 1 or horizon < 1:
        raise ScheduleError("need n >= 1 and horizon >= 1")
    if d_max < 1:
        raise ScheduleError("d_max must be at least 1")
    limit = n if allow_all_crash else n - 1
    if crash_rounds is None and not 0 <= crash_budget <= limit:
        raise ScheduleError(f"crash budget {crash_budget} outside 0..{limit}")
    if source_policy not in ("round_robin", "random"):
        raise ScheduleError(f"unknown source policy {source_policy!r}")
    rng = np.random.default_rng(seed)

    if env_kind in ("ES", "ESS"):
        if k_stab is None:
            k_stab = int(rng.integers(1, max(2, horizon // 2) + 1))
        if k_stab < 1:
            raise ScheduleError("k_stab must be at least 1")
    else:
        k_stab = None
    if env_kind == "ESS":
        if stable_source is None:
            stable_source = int(rng.integers(0, n))
        if not 0 <= stable_source < n:
            raise ScheduleError("stable source out of range")
    else:
        stable_source = None

    crash = [None] * n
    if crash_rounds is not None:
        for p, c in crash_rounds.items():
            crash[int(p)] = int(c)
        if sum(c is not None for c in crash) > limit:
            raise ScheduleError("too many crashes")
    elif crash_budget:
        pool = [p for p in range(n) if p != stable_source]
        if crash_budget > len(pool):
            raise ScheduleError("not enough processes to crash")
        victims = rng.choice(pool, size=crash_budget, replace=False)
        lo, hi = crash_window or (1, horizon)
        for p in sorted(int(v) for v in victims):
            crash[p] = int(rng.integers(lo, hi + 1))
    if stable_source is not None and crash[stable_source] is not None:
        raise ScheduleError("the stable source must not crash")

    timely_arr = rng.random((horizon + 1, n, n)) < p_timely
    late_arr = rng.integers(1, d_max + 1, size=(horizon + 1, n, n))
    idx = np.arange(n)
    timely_arr[:, idx, idx] = True

    fixed_order = None
    if env_kind == "ESS":
        rest = [p for p in rng.permutation(n).tolist() if p != stable_source]
        fixed_order = [stable_source] + rest

    sources: list = [()]
    for k in range(1, horizon + 1):
        alive = [p for p in range(n) if crash[p] is None or crash[p] > k]
        perm = rng.permutation(n).tolist()
        if fixed_order is not None and k >= k_stab:
            order = [p for p in fixed_order if p in alive]
        elif source_policy == "round_robin" and alive:
            first = alive[(k - 1) % len(alive)]
            order = [first] + [p for p in perm if p in alive and p != first]
        else:
            order = [p for p in perm if p in alive]
        sources.append(tuple(order))
        if order:
            timely_arr[k, order[0], :] = True
        if env_kind == "ES" and k >= k_stab:
            timely_arr[k, :, :] = True

    return Schedule(
        env=env_kind, n=n, horizon=horizon,
        timely=timely_arr.tolist(), late=late_arr.tolist(),
        crash_round=crash, sources=sources, k_stab=k_stab,
        stable_source=stable_source, seed=seed, d_max=d_max,
        meta={"p_timely": p_timely, "source_policy": source_policy},
    )


def validate_schedule(sched: Schedule) -> Violation | None:
    """First violated environment clause, or ``None`` if the schedule is valid.

    Senders of round ``k`` are the processes alive to send it; recipients are
    the ones alive to compute it.  Halting is a property of a run, not of a
    schedule, and is handled by the simulator's source promotion.
    """
    env, n = sched.env, sched.n
    if env not in ENV_KINDS:
        return Violation(None, "unknown environment", env)
    if env in ("ES", "ESS") and sched.k_stab is None:
        return Violation(None, "missing stabilization round")
    if env == "ESS":
        ss = sched.stable_source
        if ss is None:
            return Violation(None, "missing stable source")
        if sched.crash_round[ss] is not None:
            return Violation(sched.crash_round[ss], "stable source crashes")
    for k in range(1, sched.horizon + 1):
        tk = sched.timely[k]
        senders = [p for p in range(n) if sched.sends(p, k)]
        recipients = [p for p in range(n) if sched.computes(p, k)]
        if not senders:
            continue
        if not any(all(tk[s][j] for j in recipients) for s in senders):
            return Violation(k, "no source")
        if env == "ES" and k >= sched.k_stab:
            for s in senders:
                for j in recipients:
                    if not tk[s][j]:
                        return Violation(k, "not synchronous", f"{s}->{j}")
        if env == "ESS" and k >= sched.k_stab:
            ss = sched.stable_source
            for j in recipients:
                if not tk[ss][j]:
                    return Violation(k, "stable source not timely", f"{ss}->{j}")
        lk = sched.late[k]
        for s in senders:
            for j in range(n):
                if not tk[s][j] and not 1 <= lk[s][j] <= sched.d_max:
                    return Violation(k, "late delay out of range", f"{s}->{j}")
    return None
