"""Proposal values, the bottom sentinel, and canonical payload encoding.

Payloads are compared structurally everywhere in the simulator.  When a
payload has to leave the process (trace files, digests) it is turned into a
canonical JSON form in which every set is sorted and every map is written
with sorted keys, so structurally equal payloads are byte-equal.
"""

from __future__ import annotations

import hashlib
import json
from functools import lru_cache
from typing import Any, Iterable


class _Bot:
    """The distinguished "no proposal" value.  Orders below every integer."""

    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BOT"

    def __hash__(self):
        # fixed so set iteration order is reproducible across interpreters
        return 0x5EED

    def __eq__(self, other):
        return other is self

    def __reduce__(self):
        return (_Bot, ())


BOT = _Bot()


def value_key(v) -> tuple:
    """Sort key placing BOT before every proposal value."""
    if v is BOT:
        return (0, 0)
    return (1, v)


def max_value(values: Iterable):
    """Maximum over proposal values, ignoring BOT."""
    return max(v for v in values if v is not BOT)


def encode(obj: Any) -> Any:
    """Canonical JSON-able form of a payload or state fragment."""
    if obj is BOT or obj is None:
        return None
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, int):
        return obj
    if isinstance(obj, str):
        return obj
    hook = getattr(obj, "__canonical__", None)
    if hook is not None:
        return hook()
    if isinstance(obj, (set, frozenset)):
        items = [encode(x) for x in obj]
        items.sort(key=_json_key)
        return items
    if isinstance(obj, (tuple, list)):
        return [encode(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _json_key(x) -> str:
    return json.dumps(x, sort_keys=True, separators=(",", ":"))


def dumps(obj: Any) -> str:
    """Canonical compact JSON text (sorted keys, no whitespace)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@lru_cache(maxsize=65536)
def digest(payload) -> str:
    """Short content digest of a payload; equal payloads give equal digests."""
    if isinstance(payload, str):
        # already a digest (traces loaded from disk)
        return payload
    text = dumps(encode(payload))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
