"""Trace events and their line-delimited JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

KINDS = (
    "Moved",
    "Collected",
    "Trapped",
    "Released",
    "GateEntered",
    "MessageSent",
    "MessageDelivered",
    "ContractProposed",
    "ContractAccepted",
    "ContractRejected",
    "ContractSettled",
    "AllocationFailed",
    "Violation",
    "TrustUpdated",
    "Escaped",
    "ActionFailed",
)

# first event of every agent turn is one of these
TURN_KINDS = frozenset({"Moved", "Collected", "Released", "MessageSent", "ActionFailed"})


@dataclass
class Event:
    tick: int
    kind: str
    payload: dict[str, Any] = field(default_factory=dict)
    seq: int = -1

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "tick": self.tick, "kind": self.kind, "payload": self.payload},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> Event:
        raw = json.loads(line)
        return cls(tick=raw["tick"], kind=raw["kind"], payload=raw["payload"], seq=raw["seq"])

    @property
    def is_turn(self) -> bool:
        return self.kind in TURN_KINDS and self.payload.get("turn", False)


def dump_trace(events: list[Event]) -> str:
    return "".join(e.to_json() + "\n" for e in events)


def load_trace(text: str) -> list[Event]:
    return [Event.from_json(line) for line in text.splitlines() if line.strip()]
