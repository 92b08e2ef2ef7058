from __future__ import annotations

from enum import Enum


class Role(Enum):
    LEADER = "Leader"
    COLLECTOR = "Collector"
    GATE_USER = "GateUser"
    NEUTRAL = "Neutral"

    @classmethod
    def parse(cls, text: str) -> Role:
        key = text.replace("-", "").replace("_", "").replace(" ", "").lower()
        for role in cls:
            if role.value.lower() == key:
                return role
        raise ValueError(f"unknown role {text!r}")
