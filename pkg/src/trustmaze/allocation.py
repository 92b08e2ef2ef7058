"""Dynamic allocation of function: trust-weighted ranking and contract negotiation."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum

from trustmaze.agents import AgentState, AgentStatus, passable_for
from trustmaze.trust import (
    CapabilityMatrix,
    Side,
    TrustModel,
    update_integrity,
    update_predictability,
)
from trustmaze.mission import Violation
from trustmaze.world import Maze, Position, bfs_distances


class NoCapableCandidate(LookupError):
    pass


class InvalidState(ValueError):
    pass


class ContractStatus(Enum):
    PROPOSED = "Proposed"
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"
    COMPLETED = "Completed"
    FAILED = "Failed"


_TRANSITIONS = {
    ContractStatus.PROPOSED: {ContractStatus.ACCEPTED, ContractStatus.REJECTED},
    ContractStatus.ACCEPTED: {ContractStatus.COMPLETED, ContractStatus.FAILED},
}


def legal_transition(old: ContractStatus, new: ContractStatus) -> bool:
    return new in _TRANSITIONS.get(old, set())


@dataclass(frozen=True)
class FunctionRequest:
    function: str
    origin: Position
    requested_at: int
    requester: int | None = None  # None: raised by the system
    target_agent: int | None = None


@dataclass(frozen=True)
class Suitability:
    capability_norm: float
    availability: float

    @property
    def product(self) -> float:
        return self.capability_norm * self.availability


@dataclass
class Contract:
    id: int
    request: FunctionRequest
    performer: int
    supporters: list[int]
    affected: list[int]
    status: ContractStatus = ContractStatus.PROPOSED
    decided_at: int | None = None
    dissenters: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.performer in self.affected:
            raise ValueError("the performer cannot also be an affected party")

    def move_to(self, new: ContractStatus, tick: int | None = None) -> None:
        if not legal_transition(self.status, new):
            raise InvalidState(f"contract {self.id}: {self.status.value} -> {new.value} not allowed")
        self.status = new
        if tick is not None:
            self.decided_at = tick


def availability(
    agent: AgentState,
    request: FunctionRequest,
    maze: Maze,
    contracts: Iterable[Contract] = (),
) -> float:
    """``1 / (1 + d)`` with ``d`` the route length to the request origin.

    Trapped or escaped agents, agents already performing an accepted
    contract, and agents with no route to the origin score 0.
    """
    if agent.status in (AgentStatus.TRAPPED, AgentStatus.ESCAPED):
        return 0.0
    if any(c.status is ContractStatus.ACCEPTED and c.performer == agent.id for c in contracts):
        return 0.0
    passable = passable_for(agent.role)
    dist = bfs_distances(maze, agent.pos, lambda c: passable(c))
    # the origin may itself be a cell the agent would not route through (a trap)
    d = dist.get(request.origin)
    if d is None:
        near = [dist[p] + 1 for p in _neighbours(request.origin) if p in dist]
        if not near:
            return 0.0
        d = min(near)
    return 1.0 / (1.0 + d)


def _neighbours(p: Position) -> list[Position]:
    return [Position(p.x + dx, p.y + dy) for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0))]


def suitability(
    agent: AgentState,
    request: FunctionRequest,
    capability: CapabilityMatrix,
    maze: Maze,
    contracts: Iterable[Contract] = (),
) -> Suitability:
    cap = capability.score(agent.role, request.function) / 3
    return Suitability(cap, availability(agent, request, maze, contracts) if cap > 0 else 0.0)


@dataclass(frozen=True)
class Candidate:
    agent: int
    suitability: Suitability
    trust: float
    mean_rung: float

    @property
    def score(self) -> float:
        return self.suitability.product * self.trust


def score_candidates(
    request: FunctionRequest,
    agents: Sequence[AgentState],
    trust: TrustModel,
    maze: Maze,
    contracts: Iterable[Contract] = (),
) -> list[Candidate]:
    """Every agent with its suitability and mean trust, in id order, unfiltered."""
    contracts = list(contracts)
    out = []
    for a in sorted(agents, key=lambda a: a.id):
        s = suitability(a, request, trust.capability, maze, contracts)
        out.append(
            Candidate(a.id, s, trust.mean_composite(a.id, request.function), trust.mean_rung(a.id, request.function))
        )
    return out


def most_suitable(candidates: Sequence[Candidate]) -> int | None:
    """Best candidate on capability and availability alone, ignoring trust."""
    live = [c for c in candidates if c.suitability.product > 0]
    if not live:
        return None
    return min(live, key=lambda c: (-c.suitability.product, c.agent)).agent


def rank_candidates(
    request: FunctionRequest,
    agents: Sequence[AgentState],
    trust: TrustModel,
    maze: Maze,
    min_rung: int = 2,
    contracts: Iterable[Contract] = (),
) -> list[int]:
    """Agent ids fit to perform ``request``, best first.

    Drops anyone any observer has seen breach a hard measure, anyone whose
    mean rung is below ``min_rung`` and anyone with zero suitability; the
    rest are ordered by suitability times mean composite trust, ties to the
    lower id.
    """
    ranked = [
        c
        for c in score_candidates(request, agents, trust, maze, contracts)
        if c.suitability.product > 0
        and not trust.hard_violated(c.agent)
        and c.mean_rung >= min_rung
    ]
    if not ranked:
        raise NoCapableCandidate(f"no agent can take on {request.function!r}")
    ranked.sort(key=lambda c: (-c.score, c.agent))
    return [c.agent for c in ranked]


def propose_contract(
    contract_id: int,
    request: FunctionRequest,
    performer: int,
    agents: Sequence[AgentState],
    capability: CapabilityMatrix,
    affected_policy: str = "all",
) -> Contract:
    """Draft a contract binding ``performer`` to the request.

    ``affected_policy`` is ``"all"`` (every teammate still in the maze) or
    ``"requester"`` (only the agent that raised the need).
    """
    others = [a for a in sorted(agents, key=lambda a: a.id) if a.id != performer and a.acting]
    if affected_policy == "requester":
        affected = [a.id for a in others if a.id == request.requester]
    elif affected_policy == "all":
        affected = [a.id for a in others]
    else:
        raise ValueError(f"unknown affected policy {affected_policy!r}")
    supporters = [
        a.id for a in others if capability.score(a.role, request.function, Side.SUPPORTER) > 0
    ]
    return Contract(contract_id, request, performer, supporters, affected)


def negotiate(
    contract: Contract,
    trust: TrustModel,
    accept_rung: int = 2,
    tick: int | None = None,
) -> ContractStatus:
    """Every affected agent must rate the performer at ``accept_rung`` or above."""
    if contract.status is not ContractStatus.PROPOSED:
        raise InvalidState(f"contract {contract.id} is {contract.status.value}, not Proposed")
    fn = contract.request.function
    contract.dissenters = [
        a for a in contract.affected if trust.record(a, contract.performer, fn).rung < accept_rung
    ]
    outcome = ContractStatus.REJECTED if contract.dissenters else ContractStatus.ACCEPTED
    contract.move_to(outcome, tick)
    return outcome


@dataclass(frozen=True)
class TrustUpdate:
    observer: int
    target: int
    function: str
    cause: str
    before: float
    after: float
    rung_before: int
    rung_after: int


def settle_contract(
    contract: Contract,
    success: bool,
    trust: TrustModel,
    violations: Sequence[Violation] = (),
    tick: int | None = None,
    observe: bool = True,
) -> list[TrustUpdate]:
    """Close an accepted contract and let every teammate learn from it.

    ``observe=False`` closes it as failed without touching anyone's
    estimates, for needs that vanished for reasons outside the performer.
    """
    if contract.status is not ContractStatus.ACCEPTED:
        raise InvalidState(f"contract {contract.id} is {contract.status.value}, not Accepted")
    contract.move_to(ContractStatus.COMPLETED if success else ContractStatus.FAILED, tick)
    if not observe:
        return []
    fn = contract.request.function
    performer = contract.performer
    updates = []
    for observer in trust.observers_of(performer):
        before = trust.record(observer, performer, fn)
        update_predictability(trust.predictability, observer, performer, fn, success)
        for v in violations:
            if v.agent == performer:
                update_integrity(trust.integrity, observer, performer, v)
        after = trust.record(observer, performer, fn)
        updates.append(
            TrustUpdate(observer, performer, fn, "settle", before.composite, after.composite, before.rung, after.rung)
        )
    return updates
