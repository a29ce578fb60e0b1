"""Event traces and their line-delimited file format.

A trace is a header record followed by one record per event.  In memory,
payload fields hold the payload objects themselves; on disk they are replaced
by content digests, so a trace read back from a file compares payloads by
digest.  Every checker only ever tests payloads for equality, so both forms
check identically.

Record fields
-------------
header        schema, algorithm, env, n, values, mode, seed, horizon, ...
end_of_round  proc, round (round entered), tick, payload
compute       proc, round, tick, inbox (payloads read for that round)
deliver       proc (recipient), sender (null when emulated), round, tick,
              bundle, timely, at_round (recipient's round on arrival)
decide        proc, round, tick, value
crash         proc, round, tick
snapshot      proc, round, tick, phase ("mid" | "end"), state
add_start     proc, tick, op, value          (weak-set operations)
add_end       proc, tick, op
get           proc, tick, op, result
write_start / write_end / read               (register adapter)
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from .values import BOT, digest, dumps, encode

TRACE_SCHEMA = "anonrounds-trace/1"

_PAYLOAD_FIELDS = ("payload",)
_SET_FIELDS = ("inbox", "bundle")


class TraceFormatError(ValueError):
    pass


def _value_out(v):
    if v is None or v is BOT:
        return None
    if isinstance(v, (bool, int, str)):
        return v
    return digest(v)


class Trace:
    def __init__(self, header: dict | None = None):
        self.header = {"type": "header", "schema": TRACE_SCHEMA}
        if header:
            self.header.update(header)
        self.events: list[dict] = []

    def add(self, type_: str, **fields) -> dict:
        ev = {"type": type_, **fields}
        self.events.append(ev)
        return ev

    def __iter__(self) -> Iterator[dict]:
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def of_type(self, *types: str) -> list[dict]:
        return [e for e in self.events if e["type"] in types]

    # -- serialization -------------------------------------------------

    @staticmethod
    def _record(ev: dict) -> dict:
        out = {}
        for key, val in ev.items():
            if key in _PAYLOAD_FIELDS:
                out[key] = digest(val) if val is not None else None
            elif key in _SET_FIELDS:
                out[key] = sorted(digest(x) for x in val)
            elif key == "value":
                out[key] = _value_out(val)
            elif key == "result":
                out[key] = sorted((_value_out(x) for x in val), key=_sort_any)
            elif key == "state":
                out[key] = val
            else:
                out[key] = encode(val) if not isinstance(val, (int, str, bool, type(None))) else val
        return out

    def to_lines(self) -> list[str]:
        lines = [dumps(encode(self.header))]
        lines.extend(dumps(self._record(ev)) for ev in self.events)
        return lines

    def dumps(self) -> str:
        return "\n".join(self.to_lines()) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Trace":
        it = (ln for ln in lines if ln.strip())
        try:
            head = json.loads(next(it))
        except StopIteration:
            raise TraceFormatError("empty trace") from None
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"bad header: {exc}") from None
        if head.get("type") != "header" or head.get("schema") != TRACE_SCHEMA:
            raise TraceFormatError(f"not a trace header: {head.get('schema')!r}")
        tr = cls(head)
        for lineno, line in enumerate(it, start=2):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"line {lineno}: {exc}") from None
            if not isinstance(rec, dict) or "type" not in rec:
                raise TraceFormatError(f"line {lineno}: record without type")
            for key in _SET_FIELDS:
                if key in rec:
                    rec[key] = frozenset(rec[key])
            if "result" in rec:
                rec["result"] = frozenset(rec["result"])
            tr.events.append(rec)
        return tr

    @classmethod
    def read(cls, path) -> "Trace":
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh)

    def reloaded(self) -> "Trace":
        """Round-trip through the file format (digest form)."""
        return Trace.from_lines(self.to_lines())


def _sort_any(x):
    if x is None:
        return (0, "")
    if isinstance(x, int):
        return (1, x)
    return (2, str(x))
