"""Trust as capability, predictability and integrity, mapped onto a ladder.

Trust is held per ordered ``(observer, target)`` pair of agent ids.
Capability is fixed by role; predictability is learned per function from
contract outcomes; integrity decays with value/priority-measure violations.
"""

from __future__ import annotations

import bisect
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum

from trustmaze.mission import COMMUNICATE, GATHER, HELP, MOVE, PURPOSE_FUNCTIONS, Violation
from trustmaze.roles import Role


class BadWeights(ValueError):
    pass


class Colour(Enum):
    GREEN = "Green"
    YELLOW = "Yellow"
    ORANGE = "Orange"
    RED = "Red"


class Side(Enum):
    PERFORMER = "Performer"
    SUPPORTER = "Supporter"


_COLOUR_SCORE = {Colour.GREEN: 3, Colour.YELLOW: 2, Colour.ORANGE: 1, Colour.RED: 0}


def rating_score(colour: Colour, side: Side = Side.PERFORMER) -> int:
    """Ordinal score of a CoActive colour; the scale is the same on both sides."""
    return _COLOUR_SCORE[colour]


@dataclass
class CapabilityMatrix:
    performer: dict[tuple[Role, str], int] = field(default_factory=dict)
    supporter: dict[tuple[Role, str], int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for table in (self.performer, self.supporter):
            for key, score in table.items():
                if score not in (0, 1, 2, 3):
                    raise ValueError(f"capability score {score} for {key} not in 0..3")

    def score(self, role: Role, function: str, side: Side = Side.PERFORMER) -> int:
        table = self.performer if side is Side.PERFORMER else self.supporter
        return table.get((role, function), 0)

    def functions(self) -> list[str]:
        seen = dict.fromkeys(fn for _, fn in (*self.performer, *self.supporter))
        return list(seen)


# rows: function; columns: Leader, Collector, GateUser, Neutral
_PERFORMER_TABLE = {
    MOVE: (3, 3, 3, 3),
    HELP: (0, 1, 0, 3),
    GATHER: (0, 3, 0, 0),
    COMMUNICATE: (3, 2, 2, 3),
}
_SUPPORTER_TABLE = {
    MOVE: (0, 0, 0, 0),
    HELP: (0, 1, 0, 3),
    GATHER: (0, 0, 0, 0),
    COMMUNICATE: (2, 2, 2, 2),
}
_COLUMNS = (Role.LEADER, Role.COLLECTOR, Role.GATE_USER, Role.NEUTRAL)


def default_capability() -> CapabilityMatrix:
    def expand(table: Mapping[str, tuple[int, ...]]) -> dict[tuple[Role, str], int]:
        return {(role, fn): row[i] for fn, row in table.items() for i, role in enumerate(_COLUMNS)}

    return CapabilityMatrix(expand(_PERFORMER_TABLE), expand(_SUPPORTER_TABLE))


def capability_total(matrix: CapabilityMatrix, role: Role, side: Side = Side.PERFORMER) -> int:
    table = matrix.performer if side is Side.PERFORMER else matrix.supporter
    return sum(score for (r, _), score in table.items() if r is role)


@dataclass
class PredictabilityEstimator:
    counts: dict[tuple[int, int, str], list[int]] = field(default_factory=dict)

    def estimate(self, observer: int, target: int, function: str) -> float:
        successes, trials = self.counts.get((observer, target, function), (0, 0))
        return (successes + 1) / (trials + 2)

    def seed(self, observer: int, target: int, function: str, successes: int, trials: int) -> None:
        if not 0 <= successes <= trials:
            raise ValueError(f"need 0 <= successes <= trials, got {successes}/{trials}")
        self.counts[(observer, target, function)] = [successes, trials]


def update_predictability(
    est: PredictabilityEstimator,
    observer: int,
    target: int,
    function: str,
    success: bool,
) -> float:
    """Record one observed outcome and return the Laplace-smoothed estimate."""
    counts = est.counts.setdefault((observer, target, function), [0, 0])
    counts[1] += 1
    counts[0] += int(bool(success))
    return est.estimate(observer, target, function)


@dataclass
class IntegrityEntry:
    score: float = 1.0
    hard_violation: bool = False


@dataclass
class IntegrityLedger:
    entries: dict[tuple[int, int], IntegrityEntry] = field(default_factory=dict)
    soft_penalty: float = 0.8
    recovery: float = 1.0

    def get(self, observer: int, target: int) -> IntegrityEntry:
        return self.entries.get((observer, target), IntegrityEntry())

    def score(self, observer: int, target: int) -> float:
        return self.get(observer, target).score

    def recover(self) -> list[tuple[int, int]]:
        """Apply the per-tick recovery multiplier; returns the pairs that changed."""
        changed = []
        if self.recovery == 1.0:
            return changed
        for key, entry in self.entries.items():
            if entry.hard_violation or entry.score >= 1.0:
                continue
            new = min(1.0, entry.score * self.recovery)
            if new != entry.score:
                entry.score = new
                changed.append(key)
        return changed


def update_integrity(
    ledger: IntegrityLedger, observer: int, target: int, violation: Violation
) -> IntegrityLedger:
    entry = ledger.entries.setdefault((observer, target), IntegrityEntry())
    if violation.hard:
        entry.score = 0.0
        entry.hard_violation = True
    elif not entry.hard_violation:
        entry.score *= ledger.soft_penalty
    return ledger


def composite_trust(
    capability_norm: float,
    predictability: float,
    integrity: float,
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3),
) -> float:
    check_weights(weights)
    w_c, w_p, w_i = weights
    value = w_c * capability_norm + w_p * predictability + w_i * integrity
    return min(1.0, max(0.0, value))


def check_weights(weights: tuple[float, float, float]) -> None:
    if len(weights) != 3 or any(w < 0 or math.isnan(w) for w in weights):
        raise BadWeights(f"weights must be three non-negative numbers, got {weights}")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise BadWeights(f"weights must sum to 1, got {sum(weights)}")


@dataclass(frozen=True)
class TrustLadder:
    thresholds: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)

    def __post_init__(self) -> None:
        t = self.thresholds
        if any(not 0 < x < 1 for x in t) or any(a >= b for a, b in zip(t, t[1:])):
            raise ValueError(f"ladder thresholds must be strictly ascending in (0, 1): {t}")

    @property
    def top(self) -> int:
        return len(self.thresholds)


def ladder_rung(score: float, ladder: TrustLadder = TrustLadder()) -> int:
    """Number of thresholds at or below ``score``."""
    return bisect.bisect_right(ladder.thresholds, score)


@dataclass(frozen=True)
class TrustRecord:
    capability_norm: float
    predictability: float
    integrity: float
    composite: float
    rung: int


@dataclass
class TrustModel:
    """Engine-owned trust state for a team."""

    roles: dict[int, Role]
    capability: CapabilityMatrix = field(default_factory=default_capability)
    predictability: PredictabilityEstimator = field(default_factory=PredictabilityEstimator)
    integrity: IntegrityLedger = field(default_factory=IntegrityLedger)
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    ladder: TrustLadder = field(default_factory=TrustLadder)

    def __post_init__(self) -> None:
        check_weights(self.weights)

    def observers_of(self, target: int) -> list[int]:
        return [a for a in sorted(self.roles) if a != target]

    def capability_norm(self, target: int, function: str) -> float:
        return self.capability.score(self.roles[target], function) / 3

    def record(self, observer: int, target: int, function: str) -> TrustRecord:
        cap = self.capability_norm(target, function)
        pred = self.predictability.estimate(observer, target, function)
        integ = self.integrity.score(observer, target)
        comp = composite_trust(cap, pred, integ, self.weights)
        return TrustRecord(cap, pred, integ, comp, ladder_rung(comp, self.ladder))

    def _records(self, target: int, function: str) -> list[TrustRecord]:
        observers = self.observers_of(target)
        if not observers:
            # a lone agent is judged against the prior
            cap = self.capability_norm(target, function)
            comp = composite_trust(cap, 0.5, 1.0, self.weights)
            return [TrustRecord(cap, 0.5, 1.0, comp, ladder_rung(comp, self.ladder))]
        return [self.record(o, target, function) for o in observers]

    def mean_composite(self, target: int, function: str) -> float:
        recs = self._records(target, function)
        return sum(r.composite for r in recs) / len(recs)

    def mean_rung(self, target: int, function: str) -> float:
        recs = self._records(target, function)
        return sum(r.rung for r in recs) / len(recs)

    def hard_violated(self, target: int) -> bool:
        return any(self.integrity.get(o, target).hard_violation for o in self.observers_of(target))

    def functions(self) -> list[str]:
        fns = self.capability.functions()
        return fns or list(PURPOSE_FUNCTIONS)

    def snapshot(self, functions: Iterable[str] | None = None) -> dict[tuple[int, int, str], TrustRecord]:
        fns = list(functions) if functions is not None else self.functions()
        return {
            (o, t, fn): self.record(o, t, fn)
            for o in sorted(self.roles)
            for t in sorted(self.roles)
            if o != t
            for fn in fns
        }
