"""Turn-based simulation loop, run results and replay verification.

Each tick: deliver last tick's messages, run allocation, give every agent
still in the maze one turn in id order, score violations, then settle
contracts.  Ticks are numbered from 1.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from typing import Any

from trustmaze.agents import (
    Action,
    AgentState,
    AgentStatus,
    Board,
    Decision,
    Meaning,
    MessageKind,
    Task,
    agent_rng,
    apply_action,
    decide,
    interpret,
    perceive,
)
from trustmaze.allocation import (
    Contract,
    ContractStatus,
    FunctionRequest,
    NoCapableCandidate,
    negotiate,
    most_suitable,
    propose_contract,
    rank_candidates,
    score_candidates,
    settle_contract,
)
from trustmaze.events import Event, dump_trace
from trustmaze.mission import (
    COMMUNICATE,
    GATHER,
    HELP,
    MOVE,
    Violation,
    ViolationPolicy,
    check_violation,
)
from trustmaze.roles import Role
from trustmaze.scenario import Scenario
from trustmaze.trust import IntegrityEntry, IntegrityLedger, TrustModel, update_integrity
from trustmaze.world import Cell, Position

log = logging.getLogger(__name__)

# object functions that stay available to a faulted performer
_MOVEMENT = frozenset({"Forward", "Turn", "Stop", "Follow"})


@dataclass
class RunResult:
    trace: list[Event]
    metrics: dict[str, Any]
    trajectories: list[tuple] = field(default_factory=list)
    trust: TrustModel | None = None

    def trace_text(self) -> str:
        return dump_trace(self.trace)


PLOT_COLUMNS = (
    "tick",
    "observer",
    "target",
    "function",
    "capability",
    "predictability",
    "integrity",
    "composite",
    "rung",
)


class Simulation:
    """Mutable state of one run; :meth:`tick` advances it by one turn."""

    def __init__(self, scenario: Scenario, seed: int | None = None) -> None:
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        agents = {
            spec.id: AgentState(
                id=spec.id,
                role=spec.role,
                pos=spec.start,
                heading=spec.heading,
                hand=spec.hand,
                goal_weights=dict(spec.goal_weights),
            )
            for spec in scenario.agents
        }
        self.board = Board(
            maze=scenario.maze,
            agents=agents,
            capability=scenario.capability,
            interpretation=scenario.interpretation,
            radius=scenario.engine.radius,
        )
        tc = scenario.trust
        self.trust = TrustModel(
            roles={a.id: a.role for a in agents.values()},
            capability=scenario.capability,
            integrity=IntegrityLedger(soft_penalty=tc.soft_penalty, recovery=tc.recovery),
            weights=tc.weights,
            ladder=tc.ladder,
        )
        self.max_ticks = scenario.max_ticks
        self.t = 0
        self.trace: list[Event] = []
        self.contracts: list[Contract] = []
        self.inboxes: dict[int, list] = {a: [] for a in agents}
        self.initial_red = scenario.maze.count(Cell.TRAP) + scenario.maze.count(Cell.CLEARED)
        self.last_raised: dict[tuple, int] = {}
        self.contract_counts: dict[tuple[int, str], int] = {}
        self.trajectories: list[tuple] = []
        self.all_escaped_at: int | None = None
        self.forced = {(a["agent"], a["tick"]): Action.parse(a["action"]) for a in scenario.script.actions}
        self._seed_trust()
        self._sample_trust()

    # --- bookkeeping ---------------------------------------------------

    def emit(self, kind: str, payload: dict[str, Any]) -> Event:
        event = Event(self.t, kind, payload, seq=len(self.trace))
        self.trace.append(event)
        return event

    @property
    def done(self) -> bool:
        return self.t >= self.max_ticks or not any(a.acting for a in self.board.agents.values())

    def acting_agents(self) -> list[AgentState]:
        return [a for _, a in sorted(self.board.agents.items()) if a.acting]

    def open_contracts(self) -> list[Contract]:
        return [c for c in self.contracts if c.status is ContractStatus.ACCEPTED]

    def _seed_trust(self) -> None:
        ids = sorted(self.board.agents)
        for item in self.scenario.trust.initial:
            target = item["target"]
            observers = [o for o in ids if o != target] if item.get("observer", "*") == "*" else [item["observer"]]
            for o in observers:
                if "trials" in item:
                    self.trust.predictability.seed(o, target, item["function"], int(item.get("successes", 0)), int(item["trials"]))
                if "integrity" in item:
                    entry = self.trust.integrity.entries.setdefault((o, target), IntegrityEntry())
                    entry.score = float(item["integrity"])
                self._trust_event(o, target, item.get("function"), "initial")

    def _trust_event(self, observer: int, target: int, function: str | None, cause: str, rung_before: int | None = None) -> None:
        entry = self.trust.integrity.get(observer, target)
        payload: dict[str, Any] = {
            "observer": observer,
            "target": target,
            "function": function,
            "cause": cause,
            "integrity": entry.score,
            "hard_violation": entry.hard_violation,
        }
        if function is not None:
            rec = self.trust.record(observer, target, function)
            successes, trials = self.trust.predictability.counts.get((observer, target, function), (0, 0))
            payload.update(
                successes=successes,
                trials=trials,
                capability=rec.capability_norm,
                predictability=rec.predictability,
                composite=rec.composite,
                rung=rec.rung,
                rung_before=rung_before,
            )
        self.emit("TrustUpdated", payload)

    def _sample_trust(self) -> None:
        stride = self.scenario.engine.plot_stride
        if self.t % stride:
            return
        for o in sorted(self.board.agents):
            for tgt in sorted(self.board.agents):
                if o == tgt:
                    continue
                for fn in self.trust.functions():
                    if self.trust.capability.score(self.trust.roles[tgt], fn) == 0:
                        continue
                    r = self.trust.record(o, tgt, fn)
                    self.trajectories.append(
                        (self.t, o, tgt, fn, r.capability_norm, r.predictability, r.integrity, r.composite, r.rung)
                    )

    # --- one tick ------------------------------------------------------

    def tick(self) -> list[Event]:
        if self.done:
            raise RuntimeError("simulation already terminated")
        self.t += 1
        first = len(self.trace)
        sightings = self._deliver()
        self._allocate(self._requests(sightings))
        policy = ViolationPolicy(self.scenario.hierarchy, self._bound())
        turn_events = []
        for agent in self.acting_agents():
            turn_events.append(self._turn(agent))
        self._score(turn_events, policy)
        for key in self.trust.integrity.recover():
            self._trust_event(key[0], key[1], None, "recovery")
        self._settle(self.trace[first:])
        if self.all_escaped_at is None and not any(a.acting for a in self.board.agents.values()):
            self.all_escaped_at = self.t
        self._sample_trust()
        return self.trace[first:]

    def _deliver(self) -> list[tuple[int, Position]]:
        pending, self.board.outbox = self.board.outbox, []
        self.inboxes = {a.id: [] for a in self.acting_agents()}
        sightings = []
        for msg in pending:
            recipients = [aid for aid in self.inboxes if aid != msg.sender]
            for aid in recipients:
                self.inboxes[aid].append(msg)
                receiver = self.board.agents[aid]
                if msg.kind is MessageKind.FOLLOW_ME and interpret(
                    self.board.interpretation, receiver.role, "follow_me"
                ) is Meaning.FOLLOW_CUE:
                    receiver.follow_target = msg.sender
            self.emit("MessageDelivered", {"message": msg.to_payload(), "recipients": recipients})
            if msg.kind is MessageKind.TOKEN_SIGHTING and msg.pos is not None:
                sightings.append((msg.sender, msg.pos))
        return sightings

    def _requests(self, sightings: Sequence[tuple[int, Position]]) -> list[FunctionRequest]:
        cfg = self.scenario.allocation
        reqs: list[FunctionRequest] = []
        for item in self.scenario.script.requests:
            if item["tick"] == self.t:
                reqs.append(
                    FunctionRequest(
                        item["function"],
                        Position(*item["origin"]),
                        self.t,
                        item.get("requester"),
                        item.get("target_agent"),
                    )
                )
        if cfg.triggers.get("trapped", True):
            for agent in self.acting_agents():
                if agent.status is AgentStatus.TRAPPED and self._may_raise((HELP, agent.id)):
                    reqs.append(FunctionRequest(HELP, agent.pos, self.t, agent.id, agent.id))
        if cfg.triggers.get("token_sighting", True):
            for sender, pos in sightings:
                if self.board.maze[pos] is Cell.TRAP and self._may_raise((GATHER, pos)):
                    reqs.append(FunctionRequest(GATHER, pos, self.t, sender))
        if cfg.triggers.get("follow_leader", True):
            acting = self.acting_agents()
            if len(acting) > 1 and self._may_raise((MOVE, None)):
                origin = min(acting, key=lambda a: a.id).pos
                reqs.append(FunctionRequest(MOVE, origin, self.t, None))
        return reqs

    def _may_raise(self, key: tuple) -> bool:
        """True if no open contract covers ``key`` and it was not raised too recently."""
        if any(_need_key(c.request) == key for c in self.open_contracts()):
            return False
        last = self.last_raised.get(key)
        return last is None or self.t - last >= self.scenario.allocation.retry_after

    def _allocate(self, requests: Iterable[FunctionRequest]) -> None:
        cfg = self.scenario.allocation
        for req in requests:
            self.last_raised[_need_key(req)] = self.t
            agents = list(self.board.agents.values())
            scored = score_candidates(req, agents, self.trust, self.board.maze, self.contracts)
            best = most_suitable(scored)
            base = {
                "function": req.function,
                "origin": list(req.origin),
                "requester": req.requester,
                "target_agent": req.target_agent,
                "most_suitable": best,
            }
            try:
                ranked = rank_candidates(req, agents, self.trust, self.board.maze, cfg.min_rung, self.contracts)
            except NoCapableCandidate:
                self.emit("AllocationFailed", dict(base, reason="NoCapableCandidate"))
                continue
            accepted = False
            for performer in ranked:
                contract = propose_contract(
                    len(self.contracts), req, performer, agents, self.trust.capability, cfg.affected
                )
                self.contracts.append(contract)
                switch = best is not None and performer != best
                info = dict(
                    base,
                    contract=contract.id,
                    performer=performer,
                    affected=contract.affected,
                    supporters=contract.supporters,
                    allocation_switch=switch,
                )
                self.emit("ContractProposed", info)
                if negotiate(contract, self.trust, cfg.accept_rung, self.t) is ContractStatus.ACCEPTED:
                    self.emit("ContractAccepted", info)
                    self._start(contract)
                    accepted = True
                    break
                self.emit("ContractRejected", dict(info, dissenters=contract.dissenters))
            if not accepted:
                self.emit("AllocationFailed", dict(base, reason="AllRejected"))

    def _start(self, contract: Contract) -> None:
        req = contract.request
        performer = self.board.agents[contract.performer]
        key = (performer.id, req.function)
        self.contract_counts[key] = self.contract_counts.get(key, 0) + 1
        performer.task = Task(contract.id, req.function, req.origin, req.target_agent)
        if req.function == MOVE:
            for aid in contract.affected:
                self.board.agents[aid].follow_target = performer.id

    def _bound(self) -> dict[int, frozenset[str]]:
        bound: dict[int, set[str]] = {}
        for c in self.open_contracts():
            for aid in [c.performer, *c.affected]:
                bound.setdefault(aid, set()).add(c.request.function)
        return {k: frozenset(v) for k, v in bound.items()}

    def _faulted(self, agent: AgentState, action: Action) -> bool:
        task = agent.task
        if task is None or action.object_function in _MOVEMENT:
            return False
        if action.object_function not in self.scenario.hierarchy.required_actions(task.function):
            return False
        ordinal = self.contract_counts.get((agent.id, task.function), 0)
        return any(
            f["agent"] == agent.id and f["function"] == task.function and ordinal in f.get("contracts", [])
            for f in self.scenario.script.faults
        )

    def _turn(self, agent: AgentState) -> Event:
        forced = self.forced.get((agent.id, self.t))
        if forced is not None:
            decision = Decision(forced, None, -1)
        else:
            situation = perceive(
                agent,
                self.board.maze,
                list(self.board.agents.values()),
                self.inboxes.get(agent.id, []),
                self.t,
                self.scenario.engine.radius,
            )
            rng = agent_rng(self.seed, agent.id, self.t)
            decision = decide(agent, situation, self.scenario.cpts[self._cpt_name(agent.id)], rng)
        extra = {"goal": decision.goal, "row": decision.row}
        if self._faulted(agent, decision.action):
            a = decision.action
            payload = {
                "agent": agent.id,
                "action": a.label,
                "object_function": a.object_function,
                "turn": True,
                "failed": True,
                "reason": "fault",
                "pos": list(agent.pos),
            }
            return self.emit("ActionFailed", dict(payload, **extra))
        results = apply_action(self.board, agent.id, decision.action)
        kind, payload = results[0]
        turn = self.emit(kind, dict(payload, **extra))
        for kind, payload in results[1:]:
            self.emit(kind, payload)
        return turn

    def _cpt_name(self, agent_id: int) -> str:
        for spec in self.scenario.agents:
            if spec.id == agent_id:
                return spec.cpt
        raise KeyError(agent_id)

    def _score(self, turn_events: Sequence[Event], policy: ViolationPolicy) -> None:
        for event in turn_events:
            for v in check_violation({"payload": event.payload}, self.scenario.vpms, policy):
                self._violation(v, event)

    def _violation(self, v: Violation, event: Event) -> None:
        self.emit("Violation", {"agent": v.agent, "vpm": v.vpm, "hard": v.hard, "event": event.seq})
        for observer in self.trust.observers_of(v.agent):
            update_integrity(self.trust.integrity, observer, v.agent, v)
            self._trust_event(observer, v.agent, None, "violation")

    def _settle(self, events: Sequence[Event]) -> None:
        deadlines = self.scenario.allocation.deadlines
        for c in self.open_contracts():
            outcome = self._outcome(c, events)
            if outcome is None:
                limit = deadlines.get(c.request.function)
                if limit is not None and self.t - (c.decided_at or 0) >= limit:
                    outcome = (False, "deadline")
                else:
                    continue
            success, reason = outcome
            observe = reason != "void"
            before = {o: self.trust.record(o, c.performer, c.request.function).rung for o in self.trust.observers_of(c.performer)}
            settle_contract(c, success, self.trust, tick=self.t, observe=observe)
            self.emit(
                "ContractSettled",
                {
                    "contract": c.id,
                    "function": c.request.function,
                    "performer": c.performer,
                    "status": c.status.value,
                    "success": success,
                    "reason": reason,
                },
            )
            if observe:
                for o, rung in before.items():
                    self._trust_event(o, c.performer, c.request.function, "settle", rung)
            performer = self.board.agents[c.performer]
            if performer.task is not None and performer.task.contract == c.id:
                performer.task = None

    def _outcome(self, c: Contract, events: Sequence[Event]) -> tuple[bool, str] | None:
        req = c.request
        performer = self.board.agents[c.performer]
        mine = [e for e in events if e.payload.get("agent") == c.performer]
        if req.function == HELP:
            if any(e.kind == "Released" and req.target_agent in e.payload.get("freed", []) for e in mine):
                return True, "done"
            target = self.board.agents.get(req.target_agent) if req.target_agent is not None else None
            if target is not None and target.status is not AgentStatus.TRAPPED:
                return False, "void"
        elif req.function == GATHER:
            if any(e.kind == "Collected" and tuple(e.payload["cell"]) == tuple(req.origin) for e in mine):
                return True, "done"
            if self.board.maze[req.origin] is not Cell.TRAP:
                return False, "void"
        elif req.function == MOVE:
            if any(e.kind == "Escaped" for e in mine):
                return True, "done"
        elif req.function == COMMUNICATE:
            if any(e.kind == "MessageSent" for e in mine):
                return True, "done"
        if performer.status in (AgentStatus.TRAPPED, AgentStatus.ESCAPED):
            return False, "performer " + performer.status.value.lower()
        return None

    # --- whole runs ----------------------------------------------------

    def token_ledger(self) -> dict[str, int]:
        collected = sum(a.tokens_collected for a in self.board.agents.values())
        cleared = self.board.maze.count(Cell.CLEARED)
        return {
            "initial": self.initial_red,
            "active": self.board.maze.count(Cell.TRAP),
            "collected": collected,
            "deactivated": cleared - collected,
        }

    def result(self) -> RunResult:
        metrics = metrics_from_trace(self.trace, len(self.board.agents), self.t)
        return RunResult(self.trace, metrics, self.trajectories, self.trust)


def _need_key(req: FunctionRequest) -> tuple:
    if req.function == HELP:
        return (HELP, req.target_agent)
    if req.function == GATHER:
        return (GATHER, tuple(req.origin))
    if req.function == MOVE:
        return (MOVE, None)
    return (req.function, tuple(req.origin))


def run(scenario: Scenario, seed: int | None = None, max_ticks: int | None = None) -> RunResult:
    if max_ticks is not None:
        scenario = replace(scenario, engine=replace(scenario.engine, max_ticks=max_ticks))
    sim = Simulation(scenario, seed)
    while not sim.done:
        sim.tick()
    log.info("run finished after %d ticks", sim.t)
    return sim.result()


def metrics_from_trace(
    trace: Sequence[Event], agent_count: int, ticks_run: int | None = None
) -> dict[str, Any]:
    """Summary metrics, derived from the trace alone."""
    kinds: dict[str, int] = {}
    for e in trace:
        kinds[e.kind] = kinds.get(e.kind, 0) + 1
    escapes = [e for e in trace if e.kind == "Escaped"]
    all_out = len({e.payload["agent"] for e in escapes}) == agent_count and agent_count > 0
    last_tick = max((e.tick for e in trace), default=0)
    if ticks_run is None:
        ticks_run = last_tick
    return {
        "ticks_run": ticks_run,
        "ticks_to_all_escape": max(e.tick for e in escapes) if all_out else None,
        "timeout": not all_out,
        "escaped": len(escapes),
        "tokens_collected": kinds.get("Collected", 0),
        "gates_entered": kinds.get("GateEntered", 0),
        "releases": sum(1 for e in trace if e.kind == "Released" and e.payload.get("freed")),
        "messages_sent": kinds.get("MessageSent", 0),
        "contracts_proposed": kinds.get("ContractProposed", 0),
        "contracts_accepted": kinds.get("ContractAccepted", 0),
        "contracts_rejected": kinds.get("ContractRejected", 0),
        "contracts_completed": sum(
            1 for e in trace if e.kind == "ContractSettled" and e.payload["status"] == "Completed"
        ),
        "contracts_failed": sum(
            1 for e in trace if e.kind == "ContractSettled" and e.payload["status"] == "Failed"
        ),
        "allocation_failures": kinds.get("AllocationFailed", 0),
        "allocation_switches": sum(
            1 for e in trace if e.kind == "ContractAccepted" and e.payload.get("allocation_switch")
        ),
        "violations_soft": sum(1 for e in trace if e.kind == "Violation" and not e.payload["hard"]),
        "violations_hard": sum(1 for e in trace if e.kind == "Violation" and e.payload["hard"]),
        "actions_failed": kinds.get("ActionFailed", 0),
    }


def trust_from_trace(trace: Iterable[Event]) -> dict[str, dict]:
    """Rebuild final predictability counts and integrity entries from TrustUpdated events."""
    counts: dict[tuple[int, int, str], tuple[int, int]] = {}
    integrity: dict[tuple[int, int], tuple[float, bool]] = {}
    for e in trace:
        if e.kind != "TrustUpdated":
            continue
        p = e.payload
        integrity[(p["observer"], p["target"])] = (p["integrity"], p["hard_violation"])
        if p["function"] is not None:
            counts[(p["observer"], p["target"], p["function"])] = (p["successes"], p["trials"])
    return {"predictability": counts, "integrity": integrity}


@dataclass(frozen=True)
class ReplayResult:
    match: bool
    divergence: int | None = None
    expected: str | None = None
    actual: str | None = None


def replay_verify(trace: Sequence[Event], scenario: Scenario, seed: int | None = None) -> ReplayResult:
    """Re-run ``scenario`` and compare its trace to ``trace`` event by event."""
    fresh = run(scenario, seed).trace
    for i in range(max(len(trace), len(fresh))):
        mine = trace[i].to_json() if i < len(trace) else None
        theirs = fresh[i].to_json() if i < len(fresh) else None
        if mine != theirs:
            return ReplayResult(False, i, theirs, mine)
    return ReplayResult(True)


def role_of(scenario: Scenario, agent_id: int) -> Role:
    return next(a.role for a in scenario.agents if a.id == agent_id)
