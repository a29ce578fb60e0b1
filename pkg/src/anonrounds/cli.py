"""Command-line front end: ``run``, ``fuzz``, ``check`` and ``demo``.

Exit codes: 0 when every enabled check passes, 1 on a property violation,
2 on usage, configuration or trace-format errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from .scenario import ALL_PROPERTIES, Scenario, ScenarioError, check_file, derive, fuzz, run
from .trace import TraceFormatError

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2

# scenario field -> argparse destination
_FIELDS = ("algorithm", "env", "n", "values", "k_stab", "stable_source", "horizon", "mode",
           "seed", "deadline", "p_timely", "d_max", "backend", "app")


def _crash_pin(text: str) -> tuple[int, int]:
    try:
        p, r = text.split(":")
        return int(p), int(r)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected PROC:ROUND, got {text!r}") from None


def _scenario_flags(ap: argparse.ArgumentParser) -> None:
    g = ap.add_argument_group("scenario")
    g.add_argument("--scenario", metavar="FILE", help="JSON scenario file; flags override its fields")
    g.add_argument("--algorithm", choices=("ES", "ESS", "WEAKSET", "EMULATION"))
    g.add_argument("--env", choices=("MS", "ES", "ESS"))
    g.add_argument("--n", type=int)
    g.add_argument("--values", type=int, nargs="+")
    g.add_argument("--crashes", type=int, help="crash budget")
    g.add_argument("--crash", type=_crash_pin, action="append", metavar="PROC:ROUND",
                   help="pin a crash (repeatable, replaces the budget)")
    g.add_argument("--k-stab", type=int)
    g.add_argument("--stable-source", type=int)
    g.add_argument("--horizon", type=int)
    g.add_argument("--mode", choices=("lockstep", "skewed"))
    g.add_argument("--deadline", type=int)
    g.add_argument("--p-timely", type=float)
    g.add_argument("--d-max", type=int)
    g.add_argument("--register", action="store_true", default=None)
    g.add_argument("--backend", choices=("oracle", "network"))
    g.add_argument("--app", choices=("ES", "ESS", "FLOOD"))


def _build_scenario(args, template: bool = False) -> Scenario:
    raw = {}
    if args.scenario:
        raw = Scenario.load(args.scenario).to_dict()
        raw.pop("schema")
    for name in _FIELDS:
        val = getattr(args, name, None)
        if val is not None:
            raw[name] = val
    if args.crash:
        raw["crashes"] = {str(p): r for p, r in args.crash}
    elif args.crashes is not None:
        raw["crashes"] = args.crashes
    if args.register:
        raw["register"] = True
    if getattr(args, "out", None):
        raw["output"] = args.out
    sc = Scenario(**raw)
    return sc.validate(template=template)


def _run_and_print(sc: Scenario, args) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        trace, report = run(sc)
    for w in caught:
        print(f"# warning: {w.message}", file=sys.stderr)
    if getattr(args, "json", False):
        print(json.dumps(report.to_dict(), sort_keys=True, indent=1))
    else:
        print("property\tverdict\tdetail")
        for line in report.lines():
            print(line)
        for p, (k, v) in sorted(report.decisions.items()):
            print(f"decision\tp{p}\tround {k}\tvalue {v}")
    if args.report:
        from .report import write_run_report
        for path in write_run_report(trace, report, args.report):
            print(f"# wrote {path}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_run(args) -> int:
    return _run_and_print(_build_scenario(args), args)


def cmd_fuzz(args) -> int:
    template = _build_scenario(args, template=True)
    if args.replay is not None:
        # one derived run, exactly as the batch drew it
        sc = derive(template, args.replay, args.mixed_modes)
        sc.output = args.out
        print(f"# scenario {json.dumps(sc.to_dict(), sort_keys=True)}", file=sys.stderr)
        return _run_and_print(sc, args)
    if args.seed is None:
        args.parser.error("fuzz needs --seed (or --replay RUN_SEED)")
    summary = fuzz(template, args.runs, args.seed, mode_mix=args.mixed_modes, jobs=args.jobs)
    for line in summary.lines():
        print(line)
    if args.report:
        from .report import write_fuzz_report
        for path in write_fuzz_report(summary, args.report):
            print(f"# wrote {path}", file=sys.stderr)
    return EXIT_OK if summary.ok else EXIT_VIOLATION


def cmd_check(args) -> int:
    report = check_file(args.trace, args.prop)
    print("property\tverdict\tdetail")
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_VIOLATION


def _demo_table(title: str, sc: Scenario) -> bool:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        trace, report = run(sc, write=False)
    print(f"== {title}")
    print("proc\tround\tval\twritten\twrittenOld\tproposed")
    for ev in trace.events:
        if ev["type"] == "snapshot" and ev["phase"] == "mid":
            st = ev["state"]
            print(f"p{ev['proc']}\t{ev['round']}\t{st['val']}\t{st['written']}\t{st['writtenOld']}\t{st['proposed']}")
        elif ev["type"] == "decide":
            print(f"p{ev['proc']}\t{ev['round']}\tdecide {ev['value']}")
    print("\t".join(f"{k}={'OK' if v is None else v}" for k, v in report.verdicts.items()))
    return report.ok


def cmd_demo(args) -> int:
    ok = _demo_table("one process, value 5", Scenario("ES", "MS", 1, [5], horizon=10))
    ok &= _demo_table("two processes, values 3 and 7, all links timely",
                      Scenario("ES", "ES", 2, [3, 7], k_stab=1, horizon=10))
    return EXIT_OK if ok else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anonrounds",
                                 description="Anonymous round-based consensus and weak-set simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one seeded scenario")
    _scenario_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="TRACE", help="write the trace (JSON lines)")
    p.add_argument("--report", metavar="DIR", help="write TSV tables and figures")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fuzz", help="many runs derived from a scenario template")
    _scenario_flags(p)
    p.add_argument("--seed", type=int, help="master seed (run seeds derive from it)")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--mixed-modes", action="store_true", help="draw lockstep or skewed per run")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--report", metavar="DIR")
    p.add_argument("--replay", type=int, metavar="RUN_SEED",
                   help="re-run the single scenario derived from a run seed")
    p.add_argument("--out", metavar="TRACE", help="with --replay: write the trace")
    p.set_defaults(func=cmd_fuzz, parser=p)

    p = sub.add_parser("check", help="re-check a stored trace")
    p.add_argument("trace")
    p.add_argument("--prop", action="append", choices=ALL_PROPERTIES,
                   help="property to check (repeatable; default: all that apply)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("demo", help="print the two hand-derived reference runs")
    p.set_defaults(func=cmd_demo)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
