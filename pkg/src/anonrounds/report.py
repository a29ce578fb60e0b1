"""Tab-separated tables and figures for single runs and fuzz batches."""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import checks as C  # noqa: E402
from .weakset import op_log  # noqa: E402


def _write_tsv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


# -- single run -----------------------------------------------------------------


def round_progress_figure(trace, path: Path) -> Path:
    ix = C.TraceIndex(trace)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for p in range(ix.n):
        pts = ix.eor.get(p, [])
        if pts:
            rounds, ticks = zip(*pts)
            # small offset so lock-step processes do not hide each other
            shifted = [r + 0.08 * (p - ix.n / 2) for r in rounds]
            ax.step(ticks, shifted, where="post", label=f"p{p}", lw=1.2)
    for k, p, _ in ix.decides:
        tick = next(ev["tick"] for ev in trace.events if ev["type"] == "decide" and ev["proc"] == p)
        ax.plot([tick], [k], "k*", ms=8)
    for p, k in sorted(ix.crashed.items()):
        ax.plot([ix.eor[p][-1][1] if ix.eor.get(p) else 0], [k], "rx", ms=7)
    ax.set_xlabel("tick")
    ax.set_ylabel("round")
    ax.set_title("round progress (star: decision, x: crash)")
    if ix.n <= 8:
        ax.legend(fontsize=7, ncol=2)
    return _save(fig, path)


def ess_counter_figure(trace, path: Path) -> Path:
    ix = C.TraceIndex(trace)
    series = C.source_counter_series(ix)
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6.4, 5.0), sharex=True)
    for p, pts in sorted(series.items()):
        if pts:
            ks, cs = zip(*pts)
            top.plot(ks, cs, marker=".", lw=1, label=f"p{p}")
    k_stab = ix.header.get("k_stab")
    win = C.ess_window(ix)
    for ax in (top, bottom):
        if k_stab is not None:
            ax.axvline(k_stab, color="grey", ls="--", lw=0.8)
        if win is not None:
            ax.axvspan(win[0], win[1], color="orange", alpha=0.15)
    top.set_ylabel("stable-source counter")
    if ix.n <= 8:
        top.legend(fontsize=7, ncol=2)
    leaders = Counter()
    for (p, k), st in ix.mid.items():
        if st.get("leader"):
            leaders[k] += 1
    if leaders:
        ks = sorted(leaders)
        bottom.bar(ks, [leaders[k] for k in ks], width=0.8, color="tab:purple")
    bottom.set_ylabel("leaders")
    bottom.set_xlabel("round")
    return _save(fig, path)


def weakset_ops_figure(trace, path: Path) -> Path:
    log = op_log(trace)
    last = len(trace.events)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for o in log:
        if o.kind == "add":
            end = o.end if o.end is not None else last
            ax.plot([o.start, end], [o.proc, o.proc], color="tab:blue", lw=3, alpha=0.6,
                    solid_capstyle="butt")
        else:
            ax.plot([o.start], [o.proc], "|", color="tab:green", ms=9)
    ax.set_xlabel("event position")
    ax.set_ylabel("process")
    ax.set_title("weak-set operations (bars: adds, ticks: gets)")
    return _save(fig, path)


def write_run_report(trace, report, outdir) -> list[Path]:
    """``events.tsv``, ``checks.tsv`` and figures for one run."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    rows = []
    for ev in trace.events:
        rows.append([ev["type"], ev.get("proc", ""), ev.get("round", ""), ev.get("tick", ""),
                     "" if ev.get("value") is None else ev.get("value")])
    written.append(_write_tsv(out / "events.tsv", ["type", "proc", "round", "tick", "value"], rows))
    checks = [[name, "OK" if v is None else "VIOLATION", v or ""] for name, v in report.verdicts.items()]
    checks += [[name, "INFO", v or "OK"] for name, v in report.info.items()]
    written.append(_write_tsv(out / "checks.tsv", ["property", "verdict", "detail"], checks))
    written.append(round_progress_figure(trace, out / "round_progress.png"))
    head = trace.header
    if head.get("algorithm") == "ESS" and head.get("stable_source") is not None:
        written.append(ess_counter_figure(trace, out / "ess_counters.png"))
    if trace.of_type("add_start", "get"):
        written.append(weakset_ops_figure(trace, out / "weakset_ops.png"))
    return written


# -- fuzz batches ---------------------------------------------------------------


def decision_histogram(summary, path: Path) -> Path:
    rel = [r.last_decision - r.k_stab for r in summary.results
           if r.last_decision is not None and r.k_stab is not None]
    absolute = [r.last_decision for r in summary.results if r.last_decision is not None]
    data, label = (rel, "last decision round - stabilization round") if rel else (absolute, "last decision round")
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    if data:
        lo, hi = min(data), max(data)
        ax.hist(data, bins=range(lo, hi + 2), align="left", color="tab:blue", edgecolor="white")
    ax.set_xlabel(label)
    ax.set_ylabel("runs")
    ax.set_title(f"{summary.runs} runs, {len(summary.failed)} with violations")
    return _save(fig, path)


def write_fuzz_report(summary, outdir) -> list[Path]:
    """``runs.tsv``, ``violations.tsv`` and the decision-round histogram."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [[r.seed, r.n, r.mode, "" if r.k_stab is None else r.k_stab, r.crashes, r.decided,
             "" if r.first_decision is None else r.first_decision,
             "" if r.last_decision is None else r.last_decision,
             "OK" if r.ok else "VIOLATION"] for r in summary.results]
    written = [_write_tsv(out / "runs.tsv", ["seed", "n", "mode", "k_stab", "crashes", "decided",
                                             "first_decision", "last_decision", "verdict"], rows)]
    viol = [[r.seed, name, text] for r in summary.results for name, text in r.failures.items()]
    written.append(_write_tsv(out / "violations.tsv", ["seed", "property", "detail"], viol))
    written.append(decision_histogram(summary, out / "decision_rounds.png"))
    return written
