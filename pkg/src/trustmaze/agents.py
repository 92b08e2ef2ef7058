"""Agents: state, perception, role-specific interpretation, CPT decisions and actions.

Each turn an agent perceives a :class:`Situation`, samples one
:class:`Action` from its conditional probability table and the engine
applies it with :func:`apply_action`.  An agent either acts or sends a
message in a turn, never both.
"""

from __future__ import annotations

import hashlib
import math
import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from trustmaze.mission import COMMUNICATE, GATHER, HELP, MOVE
from trustmaze.roles import Role
from trustmaze.trust import CapabilityMatrix
from trustmaze.world import (
    Cell,
    Hand,
    Heading,
    Maze,
    Position,
    next_step_towards,
    set_cell,
    wall_follow_step,
)

PROB_TOL = 1e-9
TIME_BUCKET = 50


class AgentStatus(Enum):
    ACTIVE = "Active"
    TRAPPED = "Trapped"
    STOPPED = "Stopped"
    ESCAPED = "Escaped"


class MessageKind(Enum):
    FOLLOW_ME = "follow_me"
    HELP = "help"
    STOP_ALL = "stop_all"
    TOKEN_SIGHTING = "token"
    STOPPED = "stopped"


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: int
    pos: Position | None = None

    def to_payload(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "sender": self.sender,
            "pos": list(self.pos) if self.pos is not None else None,
        }


class ActionKind(Enum):
    FORWARD = "Forward"
    BACKWARD = "Backward"
    LEFT = "Left"
    RIGHT = "Right"
    ENTER = "Enter"
    COLLECT = "Collect"
    CHANGE = "Change"
    RELEASE = "Release"
    FOLLOW = "Follow"
    STOP = "Stop"
    SEND = "Send"


_OBJECT_FUNCTION = {
    ActionKind.FORWARD: "Forward",
    ActionKind.BACKWARD: "Forward",
    ActionKind.LEFT: "Turn",
    ActionKind.RIGHT: "Turn",
    ActionKind.ENTER: "Enter",
    ActionKind.COLLECT: "Collect",
    ActionKind.CHANGE: "Change",
    ActionKind.RELEASE: "Release",
    ActionKind.FOLLOW: "Follow",
    ActionKind.STOP: "Stop",
    ActionKind.SEND: "Message",
}


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    message: MessageKind | None = None

    @classmethod
    def parse(cls, label: str) -> Action:
        """Parse a CPT outcome label such as ``"Forward"`` or ``"Send:help"``."""
        head, _, tail = label.partition(":")
        try:
            kind = ActionKind(head)
        except ValueError:
            raise ValueError(f"unknown action {label!r}") from None
        if kind is ActionKind.SEND:
            if not tail:
                raise ValueError(f"Send needs a message kind: {label!r}")
            return cls(kind, MessageKind(tail))
        if tail:
            raise ValueError(f"only Send takes a qualifier: {label!r}")
        return cls(kind)

    @property
    def label(self) -> str:
        return f"Send:{self.message.value}" if self.message else self.kind.value

    @property
    def object_function(self) -> str:
        return _OBJECT_FUNCTION[self.kind]


TASK_NAMES = {MOVE: "move", HELP: "help", GATHER: "gather", COMMUNICATE: "communicate"}
# functions performed at a place; the performer routes there
NAV_FUNCTIONS = frozenset({HELP, GATHER})


@dataclass
class Task:
    """The function an agent is contracted to perform."""

    contract: int
    function: str
    origin: Position
    target_agent: int | None = None


@dataclass
class AgentState:
    id: int
    role: Role
    pos: Position
    heading: Heading = Heading.NORTH
    hand: Hand = Hand.LEFT
    status: AgentStatus = AgentStatus.ACTIVE
    follow_target: int | None = None
    goal_weights: dict[str, float] = field(default_factory=dict)
    gates_entered: int = 0
    tokens_collected: int = 0
    task: Task | None = None

    def __post_init__(self) -> None:
        if self.goal_weights:
            check_distribution(self.goal_weights.items(), f"goal weights of agent {self.id}")

    @property
    def acting(self) -> bool:
        return self.status is not AgentStatus.ESCAPED


# --- interpretation -----------------------------------------------------


class Meaning(Enum):
    TRAVERSABLE = "traversable"
    BLOCKED = "blocked"
    COLLECTIBLE = "collectible"
    TRAP = "trap"
    RELEASABLE = "releasable"
    ENTERABLE = "enterable"
    FOLLOW_CUE = "follow-cue"
    HELP_REQUEST = "help-request"
    STOP_CUE = "stop-cue"
    NONE = "none"


OBSERVATIONS = (
    "black_square",
    "blue_square",
    "red_square",
    "trapped_teammate",
    "gate",
    "exit",
    "follow_me",
    "help",
    "stop_all",
    "token",
    "stopped",
)


class UnknownObservation(KeyError):
    pass


class NoTranslationNeeded(ValueError):
    pass


@dataclass
class InterpretationTable:
    entries: dict[tuple[Role, str], Meaning]

    def __post_init__(self) -> None:
        for obs in self.observations():
            for role in Role:
                if (role, obs) not in self.entries:
                    raise ValueError(f"interpretation table has no entry for ({role.value}, {obs})")

    def observations(self) -> list[str]:
        return list(dict.fromkeys(obs for _, obs in self.entries))

    def common_ground(self, observation: str) -> bool:
        return len({self.entries[(r, observation)] for r in Role}) == 1


def default_interpretation() -> InterpretationTable:
    M = Meaning
    cols = (Role.LEADER, Role.COLLECTOR, Role.GATE_USER, Role.NEUTRAL)
    rows = {
        "black_square": (M.TRAVERSABLE,) * 4,
        "blue_square": (M.BLOCKED,) * 4,
        "exit": (M.TRAVERSABLE,) * 4,
        "gate": (M.ENTERABLE,) * 4,
        "red_square": (M.TRAP, M.COLLECTIBLE, M.TRAP, M.TRAP),
        "trapped_teammate": (M.NONE, M.RELEASABLE, M.NONE, M.RELEASABLE),
        "follow_me": (M.NONE, M.NONE, M.NONE, M.FOLLOW_CUE),
        "help": (M.NONE, M.HELP_REQUEST, M.HELP_REQUEST, M.HELP_REQUEST),
        "stop_all": (M.NONE, M.STOP_CUE, M.STOP_CUE, M.STOP_CUE),
        "token": (M.NONE, M.COLLECTIBLE, M.NONE, M.NONE),
        "stopped": (M.NONE,) * 4,
    }
    return InterpretationTable(
        {(role, obs): meanings[i] for obs, meanings in rows.items() for i, role in enumerate(cols)}
    )


def interpret(table: InterpretationTable, role: Role, observation: str) -> Meaning:
    try:
        return table.entries[(role, observation)]
    except KeyError:
        raise UnknownObservation(observation) from None


def translate(
    table: InterpretationTable,
    sender: Role,
    receiver: Role,
    observation: str,
    *,
    sender_id: int = 0,
    pos: Position | None = None,
) -> Message:
    """Restate an observation in the receiver's terms.

    The receiver's reading picks the message: a token sighting for a
    collectible, a help request for a releasable teammate, and so on.
    Anything the receiver cannot act on becomes a plain "stopped" notice.
    """
    theirs = interpret(table, receiver, observation)
    if interpret(table, sender, observation) == theirs:
        raise NoTranslationNeeded(f"{sender.value} and {receiver.value} agree on {observation}")
    if theirs is Meaning.COLLECTIBLE:
        return Message(MessageKind.TOKEN_SIGHTING, sender_id, pos)
    if theirs in (Meaning.RELEASABLE, Meaning.HELP_REQUEST):
        return Message(MessageKind.HELP, sender_id, pos)
    if theirs is Meaning.FOLLOW_CUE:
        return Message(MessageKind.FOLLOW_ME, sender_id)
    if theirs is Meaning.STOP_CUE:
        return Message(MessageKind.STOP_ALL, sender_id)
    return Message(MessageKind.STOPPED, sender_id, pos)


# --- conditional probability tables --------------------------------------


class MissingRow(LookupError):
    pass


class CPTError(ValueError):
    pass


def check_distribution(outcomes: Sequence[tuple[str, float]] | Any, what: str) -> None:
    probs = [p for _, p in outcomes]
    if any(not 0.0 <= p <= 1.0 for p in probs):
        raise CPTError(f"{what}: probabilities must lie in [0, 1]")
    if abs(sum(probs) - 1.0) > PROB_TOL:
        raise CPTError(f"{what}: probabilities sum to {sum(probs):.12g}, not 1")


SITUATION_FIELDS = (
    "here",
    "ahead",
    "trapped_visible",
    "token_visible",
    "gate_adjacent",
    "inbox",
    "time",
    "goal",
    "task",
    "at_target",
    "following",
)


@dataclass(frozen=True)
class CPTRow:
    """One CPT row: a partial situation pattern and an outcome distribution.

    A pattern value may be a single value or a list of accepted values;
    fields left out match anything.  An empty pattern is the wildcard row.
    """

    when: Mapping[str, Any]
    outcomes: tuple[tuple[str, float], ...]

    def matches(self, key: Mapping[str, Any]) -> bool:
        for name, want in self.when.items():
            have = key.get(name)
            if isinstance(want, (list, tuple)):
                if have not in want:
                    return False
            elif have != want:
                return False
        return True

    @property
    def entropy(self) -> float:
        return -sum(p * math.log(p) for _, p in self.outcomes if p > 0)


@dataclass
class ActionCPT:
    rows: list[CPTRow]

    def __post_init__(self) -> None:
        for i, row in enumerate(self.rows):
            unknown = set(row.when) - set(SITUATION_FIELDS)
            if unknown:
                raise CPTError(f"row {i}: unknown situation fields {sorted(unknown)}")
            check_distribution(row.outcomes, f"row {i}")
            for label, _ in row.outcomes:
                Action.parse(label)

    def match(self, key: Mapping[str, Any]) -> tuple[int, CPTRow]:
        """First row whose pattern matches, in declared order."""
        for i, row in enumerate(self.rows):
            if row.matches(key):
                return i, row
        raise MissingRow(f"no CPT row matches {dict(key)}")


def sample_index(probs: Sequence[float], u: float) -> int:
    """Inverse-CDF draw: first index whose cumulative mass exceeds ``u``."""
    total = 0.0
    last = 0
    for i, p in enumerate(probs):
        if p <= 0:
            continue
        last = i
        total += p
        if u < total:
            return i
    # u fell in the rounding gap above the final cumulative sum
    return last


def agent_rng(seed: int, agent_id: int, tick: int) -> random.Random:
    """Private stream for one agent's turn, keyed by sha256 of ``seed:agent:tick``."""
    digest = hashlib.sha256(f"{seed}:{agent_id}:{tick}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


# --- perception ---------------------------------------------------------


@dataclass
class Situation:
    key: dict[str, Any]
    pos: Position
    next_cell: Position
    visible_agents: list[int]
    visible_tokens: list[Position]
    inbox: list[Message]


_INBOX_PRIORITY = (
    MessageKind.STOP_ALL,
    MessageKind.HELP,
    MessageKind.TOKEN_SIGHTING,
    MessageKind.FOLLOW_ME,
    MessageKind.STOPPED,
)


def _kind_name(cell: Cell) -> str:
    if cell in (Cell.PATH, Cell.START, Cell.CLEARED):
        return "path"
    return {Cell.WALL: "wall", Cell.TRAP: "trap", Cell.GATE: "gate", Cell.EXIT: "exit"}[cell]


def passable_for(role: Role):
    """Cells a role will route through: collectors do not fear red squares."""
    if role is Role.COLLECTOR:
        return lambda c: c.traversable
    return lambda c: c.traversable and c is not Cell.TRAP


def forward_step(agent: AgentState, maze: Maze) -> tuple[Position, Heading]:
    """Where ``Forward`` would take the agent.

    A contracted agent heads for its task along a shortest route and holds
    once within reach; anyone else keeps a hand on the wall.
    """
    if agent.task is not None and agent.task.function in NAV_FUNCTIONS:
        origin = agent.task.origin
        if agent.pos.manhattan(origin) <= 1:
            return agent.pos, agent.heading
        goals = [p for p in _adjacent_and_self(origin) if maze.kind_at(p).traversable]
        nxt = next_step_towards(maze, agent.pos, goals, passable_for(agent.role))
        if nxt is None or nxt == agent.pos:
            return agent.pos, agent.heading
        return nxt, Heading.between(agent.pos, nxt)
    return wall_follow_step(maze, agent.pos, agent.heading, agent.hand)


def _adjacent_and_self(p: Position) -> list[Position]:
    return [p] + [p.step(h) for h in Heading]


def perceive(
    agent: AgentState,
    maze: Maze,
    others: Sequence[AgentState],
    inbox: Sequence[Message],
    tick: int = 0,
    radius: int = 3,
) -> Situation:
    if agent.status is AgentStatus.ESCAPED:
        raise ValueError(f"agent {agent.id} has escaped and no longer perceives")
    nxt, _ = forward_step(agent, maze)
    visible = [
        o for o in others if o.id != agent.id and o.acting and agent.pos.manhattan(o.pos) <= radius
    ]
    tokens = sorted(
        (p for p, c in maze.within(agent.pos, radius) if c is Cell.TRAP),
        key=lambda p: (agent.pos.manhattan(p), p.y, p.x),
    )
    summary = "none"
    kinds = {m.kind for m in inbox}
    for kind in _INBOX_PRIORITY:
        if kind in kinds:
            summary = kind.value
            break
    task = agent.task
    key = {
        "here": _kind_name(maze[agent.pos]),
        "ahead": "wall" if nxt == agent.pos else _kind_name(maze[nxt]),
        "trapped_visible": any(o.status is AgentStatus.TRAPPED for o in visible),
        "token_visible": bool(tokens),
        "gate_adjacent": any(maze.kind_at(p) is Cell.GATE for p in maze.neighbours(agent.pos)),
        "inbox": summary,
        "time": f"T{tick // TIME_BUCKET + 1}",
        "goal": None,
        "task": TASK_NAMES.get(task.function, task.function) if task else "none",
        "at_target": bool(task and task.function in NAV_FUNCTIONS and agent.pos.manhattan(task.origin) <= 1),
        "following": agent.follow_target is not None,
    }
    return Situation(
        key=key,
        pos=agent.pos,
        next_cell=nxt,
        visible_agents=[o.id for o in visible],
        visible_tokens=tokens,
        inbox=list(inbox),
    )


# --- decision -----------------------------------------------------------


@dataclass(frozen=True)
class Decision:
    action: Action
    goal: str | None
    row: int


def decide(
    agent: AgentState,
    situation: Situation,
    cpt: ActionCPT,
    rng: random.Random,
) -> Decision:
    """Sample a goal from the agent's goal weights, then an action from its CPT.

    Two uniforms are always drawn (goal, then action) so the stream stays
    aligned whatever the outcome.  A trapped agent can only send messages:
    non-Send outcomes are dropped and the rest renormalized; with no Send
    mass it calls for help.
    """
    if agent.status not in (AgentStatus.ACTIVE, AgentStatus.STOPPED, AgentStatus.TRAPPED):
        raise ValueError(f"agent {agent.id} cannot act while {agent.status.value}")
    u_goal = rng.random()
    u_action = rng.random()
    goal = None
    if agent.goal_weights:
        names = list(agent.goal_weights)
        goal = names[sample_index([agent.goal_weights[n] for n in names], u_goal)]
    key = dict(situation.key, goal=goal)
    situation.key["goal"] = goal
    index, row = cpt.match(key)
    outcomes = list(row.outcomes)
    if agent.status is AgentStatus.TRAPPED:
        outcomes = [(lbl, p) for lbl, p in outcomes if lbl.startswith("Send:") and p > 0]
        if not outcomes:
            return Decision(Action(ActionKind.SEND, MessageKind.HELP), goal, index)
        mass = sum(p for _, p in outcomes)
        outcomes = [(lbl, p / mass) for lbl, p in outcomes]
    label = outcomes[sample_index([p for _, p in outcomes], u_action)][0]
    return Decision(Action.parse(label), goal, index)


# --- action -------------------------------------------------------------


class IllegalAction(Exception):
    pass


@dataclass
class Board:
    """Mutable world the engine threads through agent turns."""

    maze: Maze
    agents: dict[int, AgentState]
    capability: CapabilityMatrix
    interpretation: InterpretationTable = field(default_factory=default_interpretation)
    radius: int = 3
    outbox: list[Message] = field(default_factory=list)


def _move_to(board: Board, agent: AgentState, nxt: Position, heading: Heading) -> list[tuple[str, dict]]:
    """Place the agent on ``nxt`` and report what happens to it there."""
    agent.heading = heading
    if nxt == agent.pos:
        return []
    agent.pos = nxt
    cell = board.maze[nxt]
    if cell is Cell.EXIT:
        agent.status = AgentStatus.ESCAPED
        agent.task = None
        return [("Escaped", {"agent": agent.id, "pos": list(nxt)})]
    if cell is Cell.TRAP and agent.role is not Role.COLLECTOR:
        agent.status = AgentStatus.TRAPPED
        return [("Trapped", {"agent": agent.id, "pos": list(nxt)})]
    return []


def _reach_order(agent: AgentState) -> list[Position]:
    """Own cell, then ahead, left, right, behind."""
    h = agent.heading
    return [agent.pos] + [agent.pos.step(d) for d in (h, h.left(), h.right(), h.reverse())]


def _pick_cell(agent: AgentState, candidates: list[Position]) -> Position | None:
    if not candidates:
        return None
    if agent.task is not None and agent.task.origin in candidates:
        return agent.task.origin
    return candidates[0]


def apply_action(board: Board, actor: int, action: Action) -> list[tuple[str, dict[str, Any]]]:
    """Carry out one action; returns ``(kind, payload)`` pairs, turn event first.

    An action the agent is not able to perform comes back as a single
    ``ActionFailed`` event with the state left untouched.
    """
    agent = board.agents[actor]
    base = {
        "agent": actor,
        "action": action.label,
        "object_function": action.object_function,
        "turn": True,
    }
    try:
        return _apply(board, agent, action, base)
    except IllegalAction as err:
        return [("ActionFailed", dict(base, failed=True, reason=str(err), pos=list(agent.pos)))]


def _apply(board: Board, agent: AgentState, action: Action, base: dict) -> list[tuple[str, dict]]:
    maze = board.maze
    kind = action.kind
    if agent.status is AgentStatus.STOPPED:
        agent.status = AgentStatus.ACTIVE
    if agent.status is AgentStatus.TRAPPED and kind is not ActionKind.SEND:
        raise IllegalAction("trapped agents can only send messages")

    if kind is ActionKind.SEND:
        msg = _compose(board, agent, action.message)
        board.outbox.append(msg)
        return [("MessageSent", dict(base, pos=list(agent.pos), message=msg.to_payload()))]

    if kind is ActionKind.STOP:
        agent.status = AgentStatus.STOPPED
        return [("Moved", dict(base, pos=list(agent.pos), moved=False))]

    if kind is ActionKind.FORWARD:
        nxt, heading = forward_step(agent, maze)
        before = agent.pos
        follow_up = _move_to(board, agent, nxt, heading)
        return [("Moved", dict(base, pos=list(agent.pos), moved=agent.pos != before))] + follow_up

    if kind is ActionKind.BACKWARD:
        agent.heading = agent.heading.reverse()
        return [("Moved", dict(base, pos=list(agent.pos), moved=False))]

    if kind in (ActionKind.LEFT, ActionKind.RIGHT):
        heading = agent.heading.left() if kind is ActionKind.LEFT else agent.heading.right()
        nxt = agent.pos.step(heading)
        before = agent.pos
        follow_up = _move_to(board, agent, nxt if maze.kind_at(nxt).traversable else before, heading)
        return [("Moved", dict(base, pos=list(agent.pos), moved=agent.pos != before))] + follow_up

    if kind is ActionKind.ENTER:
        gates = [p for p in _reach_order(agent)[1:] if maze.kind_at(p) is Cell.GATE]
        if not gates:
            raise IllegalAction("no gate within reach")
        target = gates[0]
        _move_to(board, agent, target, Heading.between(agent.pos, target))
        agent.gates_entered += 1
        return [
            ("Moved", dict(base, pos=list(agent.pos), moved=True)),
            ("GateEntered", {"agent": agent.id, "pos": list(target), "gates_entered": agent.gates_entered}),
        ]

    if kind is ActionKind.COLLECT:
        if board.capability.score(agent.role, GATHER) == 0:
            raise IllegalAction(f"{agent.role.value} cannot gather tokens")
        cell = _pick_cell(agent, [p for p in _reach_order(agent) if maze.kind_at(p) is Cell.TRAP])
        if cell is None:
            raise IllegalAction("no active red square within reach")
        board.maze = set_cell(maze, cell, Cell.CLEARED)
        agent.tokens_collected += 1
        return [("Collected", dict(base, pos=list(agent.pos), cell=list(cell), tokens_collected=agent.tokens_collected))]

    if kind in (ActionKind.RELEASE, ActionKind.CHANGE):
        if board.capability.score(agent.role, HELP) == 0:
            raise IllegalAction(f"{agent.role.value} cannot help team mates")
        reach = _reach_order(agent)
        occupied = [
            p for p in reach
            if any(o.status is AgentStatus.TRAPPED and o.pos == p for o in board.agents.values())
        ]
        if kind is ActionKind.RELEASE:
            cell = _pick_cell(agent, occupied)
            if cell is None:
                raise IllegalAction("no trapped teammate within reach")
        else:
            reds = [p for p in reach if maze.kind_at(p) is Cell.TRAP]
            cell = _pick_cell(agent, [p for p in reds if p in occupied] or reds)
            if cell is None:
                raise IllegalAction("no active red square within reach")
        was_active = maze.kind_at(cell) is Cell.TRAP
        if was_active:
            board.maze = set_cell(maze, cell, Cell.CLEARED)
        freed = []
        for other in sorted(board.agents.values(), key=lambda a: a.id):
            if other.status is AgentStatus.TRAPPED and other.pos == cell:
                other.status = AgentStatus.ACTIVE
                freed.append(other.id)
        return [("Released", dict(base, pos=list(agent.pos), cell=list(cell), freed=freed, deactivated=was_active))]

    if kind is ActionKind.FOLLOW:
        target = board.agents.get(agent.follow_target) if agent.follow_target is not None else None
        if target is None or target.id == agent.id:
            raise IllegalAction("no one to follow")
        nxt = next_step_towards(maze, agent.pos, [target.pos], passable_for(agent.role))
        if nxt is None:
            nxt = agent.pos
        heading = Heading.between(agent.pos, nxt) if nxt != agent.pos else agent.heading
        before = agent.pos
        follow_up = _move_to(board, agent, nxt, heading)
        return [
            ("Moved", dict(base, pos=list(agent.pos), moved=agent.pos != before, target=target.id))
        ] + follow_up

    raise IllegalAction(f"unsupported action {action.label}")


def _compose(board: Board, agent: AgentState, kind: MessageKind | None) -> Message:
    if kind is MessageKind.TOKEN_SIGHTING:
        tokens = sorted(
            (p for p, c in board.maze.within(agent.pos, board.radius) if c is Cell.TRAP),
            key=lambda p: (agent.pos.manhattan(p), p.y, p.x),
        )
        if not tokens:
            raise IllegalAction("no red square in sight")
        try:
            return translate(
                board.interpretation, agent.role, Role.COLLECTOR, "red_square",
                sender_id=agent.id, pos=tokens[0],
            )
        except NoTranslationNeeded as err:
            raise IllegalAction(str(err)) from None
    if kind is MessageKind.HELP:
        return Message(kind, agent.id, agent.pos)
    if kind is None:
        raise IllegalAction("Send without a message")
    return Message(kind, agent.id)
