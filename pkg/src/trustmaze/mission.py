"""Mission model: abstraction hierarchy, value/priority measures and SOCA map."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum

from trustmaze.roles import Role


class Level(Enum):
    FUNCTIONAL_PURPOSE = 0
    VALUE_PRIORITY_MEASURE = 1
    PURPOSE_FUNCTION = 2
    OBJECT_FUNCTION = 3
    PHYSICAL_OBJECT = 4


class Direction(Enum):
    MINIMIZE = "Minimize"
    MAXIMIZE = "Maximize"


class Hardness(Enum):
    SOFT = "Soft"
    HARD = "Hard"


class HierarchyError(ValueError):
    pass


class UnknownFunction(KeyError):
    pass


MOVE = "move through maze"
HELP = "help team mates"
GATHER = "gather tokens"
COMMUNICATE = "communicate"
PURPOSE_FUNCTIONS = (MOVE, HELP, GATHER, COMMUNICATE)

OBJECT_FUNCTIONS = ("Forward", "Enter", "Turn", "Collect", "Stop", "Change", "Release", "Follow", "Message")

METRICS = ("ticks", "tokens", "gates", "teamwork")


@dataclass(frozen=True)
class Node:
    id: str
    level: Level
    label: str


@dataclass
class AbstractionHierarchy:
    nodes: dict[str, Node] = field(default_factory=dict)
    edges: list[tuple[str, str]] = field(default_factory=list)

    def add(self, id: str, level: Level, label: str | None = None) -> None:
        self.nodes[id] = Node(id, level, label or id)

    def link(self, upper: str, lower: str) -> None:
        self.edges.append((upper, lower))

    def children(self, id: str) -> list[str]:
        return [lo for up, lo in self.edges if up == id]

    def parents(self, id: str) -> list[str]:
        return [up for up, lo in self.edges if lo == id]

    def at_level(self, level: Level) -> list[str]:
        return [n.id for n in self.nodes.values() if n.level is level]

    def reachable(self, root: str) -> set[str]:
        seen = {root}
        todo = [root]
        while todo:
            for child in self.children(todo.pop()):
                if child not in seen:
                    seen.add(child)
                    todo.append(child)
        return seen

    def validate(self) -> None:
        """Raise :class:`HierarchyError` unless edges join adjacent levels only.

        Adjacent-level edges pointing downwards make the graph acyclic by
        construction, so no separate cycle check is needed.
        """
        for up, lo in self.edges:
            if up not in self.nodes or lo not in self.nodes:
                raise HierarchyError(f"edge {up!r} -> {lo!r} names an unknown node")
            if self.nodes[lo].level.value != self.nodes[up].level.value + 1:
                raise HierarchyError(f"edge {up!r} -> {lo!r} skips or reverses a level")
        for node in self.nodes.values():
            if node.level is not Level.FUNCTIONAL_PURPOSE and not self.parents(node.id):
                raise HierarchyError(f"{node.id!r} has no means-ends link upwards")
        if len(self.at_level(Level.FUNCTIONAL_PURPOSE)) != 1:
            raise HierarchyError("exactly one functional purpose is required")

    def required_actions(self, function: str) -> frozenset[str]:
        """Object functions a purpose function is carried out by."""
        return frozenset(self.children(function))


@dataclass(frozen=True)
class ValuePriorityMeasure:
    name: str
    direction: Direction
    hardness: Hardness
    metric: str
    # inclusive (x0, y0, x1, y1); None means the whole maze
    zone: tuple[int, int, int, int] | None = None

    def covers(self, pos: Sequence[int] | None) -> bool:
        if self.zone is None:
            return True
        if pos is None:
            return False
        x0, y0, x1, y1 = self.zone
        return x0 <= pos[0] <= x1 and y0 <= pos[1] <= y1

    def degraded_by(self, delta: int) -> bool:
        return delta > 0 if self.direction is Direction.MINIMIZE else delta < 0


@dataclass(frozen=True)
class GoalSpec:
    team_goal: str
    individual_goals: Mapping[Role, tuple[tuple[str, str], ...]]


@dataclass(frozen=True)
class AllocationMap:
    entries: tuple[tuple[Role, str, bool], ...]

    def roles_for(self, function: str) -> list[Role]:
        return [role for role, fn, allocated in self.entries if fn == function and allocated]

    def functions(self) -> set[str]:
        return {fn for _, fn, _ in self.entries}


@dataclass(frozen=True)
class Violation:
    vpm: str
    agent: int
    hard: bool


# counter changes caused by each object function
ACTION_METRIC_DELTAS: dict[str, dict[str, int]] = {
    "Collect": {"tokens": 1, "ticks": 1},
    "Change": {"teamwork": 1, "ticks": 1},
    "Release": {"teamwork": 1, "ticks": 1},
    "Enter": {"gates": 1},
    "Follow": {"teamwork": 1},
}


def build_default_hierarchy() -> AbstractionHierarchy:
    h = AbstractionHierarchy()
    h.add("solve the maze", Level.FUNCTIONAL_PURPOSE)
    for vpm in ("minimise time", "maximise tokens", "minimise gate", "maximise teamwork"):
        h.add(vpm, Level.VALUE_PRIORITY_MEASURE)
        h.link("solve the maze", vpm)
    for pf in PURPOSE_FUNCTIONS:
        h.add(pf, Level.PURPOSE_FUNCTION)
    for of in OBJECT_FUNCTIONS:
        h.add(of, Level.OBJECT_FUNCTION)
    for po in ("black square", "blue square", "red square", "gate", "exit", "teammate"):
        h.add(po, Level.PHYSICAL_OBJECT)

    for vpm, pf in [
        ("minimise time", MOVE),
        ("minimise gate", MOVE),
        ("maximise tokens", GATHER),
        ("maximise teamwork", HELP),
        ("maximise teamwork", COMMUNICATE),
        ("maximise teamwork", MOVE),
    ]:
        h.link(vpm, pf)
    for pf, ofs in [
        (MOVE, ("Forward", "Turn", "Enter", "Follow", "Stop")),
        (HELP, ("Forward", "Turn", "Release", "Change")),
        (GATHER, ("Forward", "Turn", "Collect", "Change")),
        (COMMUNICATE, ("Message", "Stop")),
    ]:
        for of in ofs:
            h.link(pf, of)
    for of, pos in [
        ("Forward", ("black square", "blue square", "exit")),
        ("Turn", ("black square", "blue square")),
        ("Enter", ("gate",)),
        ("Collect", ("red square",)),
        ("Change", ("red square",)),
        ("Release", ("red square", "teammate")),
        ("Stop", ("red square", "teammate")),
        ("Follow", ("teammate",)),
        ("Message", ("teammate",)),
    ]:
        for po in pos:
            h.link(of, po)
    return h


def default_vpms() -> list[ValuePriorityMeasure]:
    soft = Hardness.SOFT
    return [
        ValuePriorityMeasure("minimise time", Direction.MINIMIZE, soft, "ticks"),
        ValuePriorityMeasure("maximise tokens", Direction.MAXIMIZE, soft, "tokens"),
        ValuePriorityMeasure("minimise gate", Direction.MINIMIZE, soft, "gates"),
        ValuePriorityMeasure("maximise teamwork", Direction.MAXIMIZE, soft, "teamwork"),
    ]


def default_goal_spec() -> GoalSpec:
    return GoalSpec(
        team_goal="all team members escape by the shortest route",
        individual_goals={
            Role.LEADER: (("lead the team out", "altruistic"),),
            Role.COLLECTOR: (("collect tokens", "selfish"), ("release teammates", "altruistic")),
            Role.GATE_USER: (("enter gates", "selfish"),),
            Role.NEUTRAL: (("release teammates", "altruistic"), ("follow the leader", "altruistic")),
        },
    )


def build_default_mission() -> tuple[AbstractionHierarchy, list[ValuePriorityMeasure], GoalSpec]:
    return build_default_hierarchy(), default_vpms(), default_goal_spec()


def default_allocation_map(performer_scores: Mapping[tuple[Role, str], int]) -> AllocationMap:
    """Pre-mission baseline: a role is allocated a function it can do unaided (score 3)."""
    entries = tuple(
        (role, fn, performer_scores.get((role, fn), 0) == 3)
        for fn in PURPOSE_FUNCTIONS
        for role in Role
    )
    return AllocationMap(entries)


def soca_allocated_roles(
    function: str,
    amap: AllocationMap,
    hierarchy: AbstractionHierarchy | None = None,
) -> list[Role]:
    """Roles statically allocated to ``function``.

    Object functions resolve through their purpose-function parents when a
    hierarchy is given.
    """
    if function in amap.functions():
        return amap.roles_for(function)
    if hierarchy is not None and function in hierarchy.nodes:
        roles: list[Role] = []
        for parent in hierarchy.parents(function):
            for role in amap.roles_for(parent):
                if role not in roles:
                    roles.append(role)
        if hierarchy.nodes[function].level is Level.OBJECT_FUNCTION:
            return sorted(roles, key=list(Role).index)
    raise UnknownFunction(function)


@dataclass(frozen=True)
class ViolationPolicy:
    """What :func:`check_violation` needs besides the event itself.

    ``bound`` maps an agent id to the purpose functions of the accepted
    contracts it is party to at the time of the action.
    """

    hierarchy: AbstractionHierarchy
    bound: Mapping[int, frozenset[str]] = field(default_factory=dict)


def check_violation(
    event: Mapping,
    vpms: Iterable[ValuePriorityMeasure],
    policy: ViolationPolicy,
) -> list[Violation]:
    """Measures degraded by a completed agent action.

    Soft measures count only while the actor is party to an accepted
    contract and none of its contracts calls for the action.  Hard
    measures count whenever the action happens inside their zone.
    """
    payload = event.get("payload", {})
    action = payload.get("object_function")
    agent = payload.get("agent")
    if action is None or agent is None or payload.get("failed"):
        return []
    deltas = ACTION_METRIC_DELTAS.get(action, {})
    bound = policy.bound.get(agent, frozenset())
    unrequired = bool(bound) and not any(
        action in policy.hierarchy.required_actions(fn) for fn in bound
    )
    where = payload.get("cell", payload.get("pos"))
    found = []
    for vpm in vpms:
        if not vpm.degraded_by(deltas.get(vpm.metric, 0)) or not vpm.covers(where):
            continue
        if vpm.hardness is Hardness.HARD or unrequired:
            found.append(Violation(vpm.name, agent, vpm.hardness is Hardness.HARD))
    return found
