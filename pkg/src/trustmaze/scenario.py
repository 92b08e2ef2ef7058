"""Scenario files: YAML documents validated into a :class:`Scenario`.

Sections are ``maze``, ``agents``, ``cpts``, ``mission``, ``trust``,
``allocation``, ``engine`` and ``script``.  Unknown keys are rejected and
every problem is reported as a :class:`Diagnostic` naming its section and
key.  ``cpts`` maps a table name to its rows; agents refer to tables by
name so roles can share them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from trustmaze.agents import (
    Action,
    ActionCPT,
    CPTError,
    CPTRow,
    InterpretationTable,
    Meaning,
    OBSERVATIONS,
    check_distribution,
    default_interpretation,
)
from trustmaze.mission import (
    AbstractionHierarchy,
    AllocationMap,
    Direction,
    GoalSpec,
    Hardness,
    HierarchyError,
    Level,
    METRICS,
    PURPOSE_FUNCTIONS,
    ValuePriorityMeasure,
    build_default_mission,
    default_allocation_map,
)
from trustmaze.roles import Role
from trustmaze.trust import BadWeights, CapabilityMatrix, TrustLadder, check_weights, default_capability
from trustmaze.world import Hand, Heading, Maze, MazeError, Position, generate_maze, load_maze

SCHEMA_VERSION = 1

_SECTIONS = {
    "schema_version": None,
    "name": None,
    "seed": None,
    "maze": {"file", "text", "generate"},
    "agents": None,
    "cpts": None,
    "mission": {"vpms", "hierarchy", "soca", "interpretation"},
    "trust": {"weights", "ladder", "soft_penalty", "recovery", "initial"},
    "allocation": {"min_rung", "accept_rung", "triggers", "affected", "deadlines", "retry_after"},
    "engine": {"max_ticks", "radius", "plot_stride"},
    "script": {"requests", "faults", "actions"},
}
_AGENT_KEYS = {"id", "role", "hand", "start", "heading", "cpt", "goal_weights"}
_GENERATE_KEYS = {"width", "height", "tokens", "gates", "seed"}
_TRIGGERS = ("trapped", "token_sighting", "follow_leader")

DEFAULT_DEADLINES = {
    "move through maze": None,
    "help team mates": 40,
    "gather tokens": 40,
    "communicate": 10,
}


@dataclass(frozen=True)
class Diagnostic:
    section: str
    key: str
    reason: str

    def __str__(self) -> str:
        return f"[{self.section}] {self.key}: {self.reason}"


class InvalidScenario(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]) -> None:
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class AgentSpec:
    id: int
    role: Role
    hand: Hand
    start: Position
    heading: Heading
    cpt: str
    goal_weights: dict[str, float]


@dataclass
class TrustConfig:
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    ladder: TrustLadder = field(default_factory=TrustLadder)
    soft_penalty: float = 0.8
    recovery: float = 1.0
    initial: list[dict[str, Any]] = field(default_factory=list)


@dataclass
class AllocationConfig:
    min_rung: int = 2
    accept_rung: int = 2
    triggers: dict[str, bool] = field(default_factory=lambda: dict.fromkeys(_TRIGGERS, True))
    affected: str = "all"
    deadlines: dict[str, int | None] = field(default_factory=lambda: dict(DEFAULT_DEADLINES))
    retry_after: int = 10


@dataclass
class EngineConfig:
    max_ticks: int | None = None
    radius: int = 3
    plot_stride: int = 1


@dataclass
class Script:
    requests: list[dict[str, Any]] = field(default_factory=list)
    faults: list[dict[str, Any]] = field(default_factory=list)
    actions: list[dict[str, Any]] = field(default_factory=list)


@dataclass
class Scenario:
    maze: Maze
    agents: list[AgentSpec]
    cpts: dict[str, ActionCPT]
    hierarchy: AbstractionHierarchy
    vpms: list[ValuePriorityMeasure]
    goals: GoalSpec
    soca: AllocationMap
    capability: CapabilityMatrix
    interpretation: InterpretationTable
    trust: TrustConfig = field(default_factory=TrustConfig)
    allocation: AllocationConfig = field(default_factory=AllocationConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    script: Script = field(default_factory=Script)
    seed: int = 0
    name: str = "scenario"

    @property
    def max_ticks(self) -> int:
        if self.engine.max_ticks is not None:
            return self.engine.max_ticks
        return 10 * len(self.maze.open_cells())


class _Collector:
    def __init__(self) -> None:
        self.diagnostics: list[Diagnostic] = []

    def add(self, section: str, key: str, reason: str) -> None:
        self.diagnostics.append(Diagnostic(section, key, reason))


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise InvalidScenario([Diagnostic("file", str(path), f"not valid YAML: {err}")]) from None
    return parse_scenario(raw, base_dir=path.parent)


def shipped_scenario_path(name: str) -> Path:
    """Path of a bundled scenario, e.g. ``"default"`` or ``"collector-fails"``."""
    ref = resources.files("trustmaze") / "scenarios" / f"{name}.yaml"
    return Path(str(ref))


def shipped_scenarios() -> list[str]:
    folder = resources.files("trustmaze") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in folder.iterdir() if p.name.endswith(".yaml"))


def parse_scenario(raw: Any, base_dir: Path | None = None) -> Scenario:
    """Validate a decoded scenario document, collecting every problem found."""
    diag = _Collector()
    if not isinstance(raw, dict):
        raise InvalidScenario([Diagnostic("file", "-", "top level must be a mapping")])
    for key in raw:
        if key not in _SECTIONS:
            diag.add(str(key), "-", "unknown section")
    if raw.get("schema_version") != SCHEMA_VERSION:
        diag.add("schema_version", "schema_version", f"must be {SCHEMA_VERSION}")
    for section, keys in _SECTIONS.items():
        value = raw.get(section)
        if keys is not None and value is not None:
            if not isinstance(value, dict):
                diag.add(section, "-", "must be a mapping")
                continue
            for key in value:
                if key not in keys:
                    diag.add(section, str(key), "unknown key")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        diag.add("seed", "seed", "must be an integer")
        seed = 0

    maze = _parse_maze(raw.get("maze"), base_dir, diag)
    hierarchy, vpms, goals = build_default_mission()
    mission = raw.get("mission") or {}
    if isinstance(mission, dict):
        vpms = _parse_vpms(mission.get("vpms"), vpms, diag)
        _apply_hierarchy(mission.get("hierarchy"), hierarchy, diag)
    capability = default_capability()
    soca = _parse_soca(mission.get("soca") if isinstance(mission, dict) else None, capability, diag)
    interpretation = _parse_interpretation(
        mission.get("interpretation") if isinstance(mission, dict) else None, diag
    )
    cpts = _parse_cpts(raw.get("cpts"), diag)
    agents = _parse_agents(raw.get("agents"), maze, cpts, vpms, diag)
    trust = _parse_trust(raw.get("trust") or {}, agents, diag)
    allocation = _parse_allocation(raw.get("allocation") or {}, diag)
    engine = _parse_engine(raw.get("engine") or {}, diag)
    script = _parse_script(raw.get("script") or {}, agents, maze, diag)

    if diag.diagnostics:
        raise InvalidScenario(diag.diagnostics)
    assert maze is not None
    return Scenario(
        maze=maze,
        agents=agents,
        cpts=cpts,
        hierarchy=hierarchy,
        vpms=vpms,
        goals=goals,
        soca=soca,
        capability=capability,
        interpretation=interpretation,
        trust=trust,
        allocation=allocation,
        engine=engine,
        script=script,
        seed=seed,
        name=str(raw.get("name", "scenario")),
    )


def _parse_maze(spec: Any, base_dir: Path | None, diag: _Collector) -> Maze | None:
    if not isinstance(spec, dict):
        diag.add("maze", "-", "a maze section with file, text or generate is required")
        return None
    given = [k for k in ("file", "text", "generate") if k in spec]
    if len(given) != 1:
        diag.add("maze", "-", "give exactly one of file, text, generate")
        return None
    try:
        if "file" in spec:
            path = Path(spec["file"])
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            return load_maze(path.read_text(encoding="utf-8"))
        if "text" in spec:
            return load_maze(str(spec["text"]))
        gen = spec["generate"]
        if not isinstance(gen, dict) or set(gen) - _GENERATE_KEYS:
            diag.add("maze", "generate", f"expects keys {sorted(_GENERATE_KEYS)}")
            return None
        return generate_maze(
            int(gen.get("width", 21)),
            int(gen.get("height", 21)),
            int(gen.get("tokens", 5)),
            int(gen.get("gates", 3)),
            int(gen.get("seed", 0)),
        )
    except MazeError as err:
        diag.add("maze", given[0], f"{type(err).__name__}: {err}")
    except OSError as err:
        diag.add("maze", "file", f"cannot read: {err}")
    return None


def _parse_vpms(spec: Any, default: list[ValuePriorityMeasure], diag: _Collector) -> list[ValuePriorityMeasure]:
    if spec is None:
        return default
    if not isinstance(spec, list):
        diag.add("mission", "vpms", "must be a list")
        return default
    out = []
    for i, item in enumerate(spec):
        key = f"vpms[{i}]"
        try:
            extra = set(item) - {"name", "direction", "hardness", "metric", "zone"}
            if extra:
                diag.add("mission", key, f"unknown keys {sorted(extra)}")
                continue
            metric = item["metric"]
            if metric not in METRICS:
                diag.add("mission", key, f"metric must be one of {METRICS}")
                continue
            zone = item.get("zone")
            if zone is not None:
                zone = tuple(int(v) for v in zone)
                if len(zone) != 4:
                    raise ValueError("zone needs four numbers x0, y0, x1, y1")
            out.append(
                ValuePriorityMeasure(
                    str(item["name"]),
                    Direction(item.get("direction", "Minimize")),
                    Hardness(item.get("hardness", "Soft")),
                    metric,
                    zone,
                )
            )
        except (KeyError, TypeError, ValueError) as err:
            diag.add("mission", key, f"bad measure: {err}")
    return out


def _apply_hierarchy(spec: Any, hierarchy: AbstractionHierarchy, diag: _Collector) -> None:
    if spec is None:
        return
    if not isinstance(spec, dict) or set(spec) - {"nodes", "edges"}:
        diag.add("mission", "hierarchy", "expects optional 'nodes' and 'edges' lists")
        return
    try:
        for node in spec.get("nodes", []):
            hierarchy.add(str(node["id"]), Level[str(node["level"]).upper()], node.get("label"))
        for up, lo in spec.get("edges", []):
            hierarchy.link(str(up), str(lo))
        hierarchy.validate()
    except (KeyError, TypeError, ValueError, HierarchyError) as err:
        diag.add("mission", "hierarchy", str(err))


def _parse_soca(spec: Any, capability: CapabilityMatrix, diag: _Collector) -> AllocationMap:
    if spec is None:
        return default_allocation_map(capability.performer)
    entries = []
    try:
        allocated = {Role.parse(r): set(fns) for r, fns in spec.items()}
    except (AttributeError, ValueError, TypeError) as err:
        diag.add("mission", "soca", f"expects role -> list of functions: {err}")
        return default_allocation_map(capability.performer)
    for fn in PURPOSE_FUNCTIONS:
        for role in Role:
            entries.append((role, fn, fn in allocated.get(role, set())))
    for role, fns in allocated.items():
        for fn in fns - set(PURPOSE_FUNCTIONS):
            diag.add("mission", f"soca.{role.value}", f"unknown function {fn!r}")
    return AllocationMap(tuple(entries))


def _parse_interpretation(spec: Any, diag: _Collector) -> InterpretationTable:
    table = default_interpretation()
    if spec is None:
        return table
    if not isinstance(spec, dict):
        diag.add("mission", "interpretation", "expects observation -> role -> meaning")
        return table
    for obs, per_role in spec.items():
        if obs not in OBSERVATIONS or not isinstance(per_role, dict):
            diag.add("mission", f"interpretation.{obs}", "unknown observation or malformed entry")
            continue
        for role, meaning in per_role.items():
            try:
                table.entries[(Role.parse(role), obs)] = Meaning(meaning)
            except ValueError as err:
                diag.add("mission", f"interpretation.{obs}.{role}", str(err))
    return table


def _parse_cpts(spec: Any, diag: _Collector) -> dict[str, ActionCPT]:
    if not isinstance(spec, dict) or not spec:
        diag.add("cpts", "-", "at least one named CPT is required")
        return {}
    out = {}
    for name, rows in spec.items():
        if not isinstance(rows, list):
            diag.add("cpts", str(name), "must be a list of rows")
            continue
        parsed = []
        ok = True
        for i, row in enumerate(rows):
            key = f"{name}[{i}]"
            if not isinstance(row, dict) or set(row) - {"when", "then"} or "then" not in row:
                diag.add("cpts", key, "a row needs 'then' and optionally 'when'")
                ok = False
                continue
            when = row.get("when") or {}
            outcomes = tuple((str(k), float(v)) for k, v in (row["then"] or {}).items())
            try:
                check_distribution(outcomes, key)
            except CPTError as err:
                diag.add("cpts", key, str(err))
                ok = False
                continue
            parsed.append(CPTRow(dict(when), outcomes))
        if not ok:
            continue
        try:
            out[str(name)] = ActionCPT(parsed)
        except (CPTError, ValueError) as err:
            diag.add("cpts", str(name), str(err))
    return out


def _parse_agents(
    spec: Any,
    maze: Maze | None,
    cpts: dict[str, ActionCPT],
    vpms: list[ValuePriorityMeasure],
    diag: _Collector,
) -> list[AgentSpec]:
    if not isinstance(spec, list) or not spec:
        diag.add("agents", "-", "at least one agent is required")
        return []
    vpm_names = {v.name for v in vpms}
    out = []
    seen = set()
    for i, item in enumerate(spec):
        key = f"agents[{i}]"
        if not isinstance(item, dict):
            diag.add("agents", key, "must be a mapping")
            continue
        extra = set(item) - _AGENT_KEYS
        if extra:
            diag.add("agents", key, f"unknown keys {sorted(extra)}")
            continue
        try:
            aid = int(item.get("id", i))
            role = Role.parse(str(item["role"]))
            hand = Hand(item.get("hand", "Left"))
            heading = Heading(item.get("heading", "N"))
        except (KeyError, ValueError) as err:
            diag.add("agents", key, f"bad field: {err}")
            continue
        if aid in seen:
            diag.add("agents", key, f"duplicate id {aid}")
            continue
        seen.add(aid)
        start = None
        if "start" in item:
            start = Position(*map(int, item["start"]))
            if maze is not None and (not maze.in_bounds(start) or not maze[start].traversable):
                diag.add("agents", f"{key}.start", "start must be an open cell")
        elif maze is not None:
            start = maze.starts[len(out) % len(maze.starts)]
        cpt = str(item.get("cpt", role.value))
        if cpt not in cpts:
            diag.add("agents", f"{key}.cpt", f"no CPT named {cpt!r}")
        weights = {str(k): float(v) for k, v in (item.get("goal_weights") or {}).items()}
        unknown = set(weights) - vpm_names
        if unknown:
            diag.add("agents", f"{key}.goal_weights", f"unknown measures {sorted(unknown)}")
        if weights:
            try:
                check_distribution(list(weights.items()), "goal weights")
            except CPTError as err:
                diag.add("agents", f"{key}.goal_weights", str(err))
        out.append(AgentSpec(aid, role, hand, start or Position(0, 0), heading, cpt, weights))
    return out


def _parse_trust(spec: dict, agents: list[AgentSpec], diag: _Collector) -> TrustConfig:
    cfg = TrustConfig()
    if "weights" in spec:
        try:
            w = tuple(float(x) for x in spec["weights"])
            check_weights(w)  # type: ignore[arg-type]
            cfg.weights = w  # type: ignore[assignment]
        except (BadWeights, TypeError, ValueError) as err:
            diag.add("trust", "weights", str(err))
    if "ladder" in spec:
        try:
            cfg.ladder = TrustLadder(tuple(float(x) for x in spec["ladder"]))
        except (TypeError, ValueError) as err:
            diag.add("trust", "ladder", str(err))
    for key in ("soft_penalty", "recovery"):
        if key in spec:
            value = spec[key]
            if not isinstance(value, (int, float)) or value < 0 or (key == "soft_penalty" and value > 1):
                diag.add("trust", key, "out of range")
            else:
                setattr(cfg, key, float(value))
    ids = {a.id for a in agents}
    for i, item in enumerate(spec.get("initial", []) or []):
        key = f"initial[{i}]"
        if not isinstance(item, dict) or set(item) - {"observer", "target", "function", "successes", "trials", "integrity"}:
            diag.add("trust", key, "unknown or malformed entry")
            continue
        if item.get("target") not in ids or (item.get("observer", "*") != "*" and item.get("observer") not in ids):
            diag.add("trust", key, "observer/target must be agent ids ('*' for every observer)")
            continue
        if "trials" in item:
            if item.get("function") not in PURPOSE_FUNCTIONS:
                diag.add("trust", key, "predictability seeds need a purpose function")
                continue
            if not 0 <= int(item.get("successes", 0)) <= int(item["trials"]):
                diag.add("trust", key, "need 0 <= successes <= trials")
                continue
        if "integrity" in item and not 0 <= float(item["integrity"]) <= 1:
            diag.add("trust", key, "integrity must lie in [0, 1]")
            continue
        cfg.initial.append(dict(item))
    return cfg


def _parse_allocation(spec: dict, diag: _Collector) -> AllocationConfig:
    cfg = AllocationConfig()
    for key in ("min_rung", "accept_rung", "retry_after"):
        if key in spec:
            value = spec[key]
            if not isinstance(value, int) or value < 0:
                diag.add("allocation", key, "must be a non-negative integer")
            else:
                setattr(cfg, key, value)
    if "triggers" in spec:
        trig = spec["triggers"]
        if not isinstance(trig, dict) or set(trig) - set(_TRIGGERS):
            diag.add("allocation", "triggers", f"expects booleans for {list(_TRIGGERS)}")
        else:
            cfg.triggers.update({k: bool(v) for k, v in trig.items()})
    if "affected" in spec:
        if spec["affected"] not in ("all", "requester"):
            diag.add("allocation", "affected", "must be 'all' or 'requester'")
        else:
            cfg.affected = spec["affected"]
    if "deadlines" in spec:
        dl = spec["deadlines"]
        if not isinstance(dl, dict) or set(dl) - set(PURPOSE_FUNCTIONS):
            diag.add("allocation", "deadlines", "keys must be purpose functions")
        else:
            cfg.deadlines.update({k: (None if v is None else int(v)) for k, v in dl.items()})
    return cfg


def _parse_engine(spec: dict, diag: _Collector) -> EngineConfig:
    cfg = EngineConfig()
    if spec.get("max_ticks") is not None:
        if not isinstance(spec["max_ticks"], int) or spec["max_ticks"] < 0:
            diag.add("engine", "max_ticks", "must be a non-negative integer")
        else:
            cfg.max_ticks = spec["max_ticks"]
    for key in ("radius", "plot_stride"):
        if key in spec:
            if not isinstance(spec[key], int) or spec[key] < 1:
                diag.add("engine", key, "must be a positive integer")
            else:
                setattr(cfg, key, spec[key])
    return cfg


def _parse_script(spec: dict, agents: list[AgentSpec], maze: Maze | None, diag: _Collector) -> Script:
    script = Script()
    ids = {a.id for a in agents}
    for i, req in enumerate(spec.get("requests", []) or []):
        key = f"requests[{i}]"
        if not isinstance(req, dict) or set(req) - {"tick", "function", "origin", "requester", "target_agent"}:
            diag.add("script", key, "unknown or malformed request")
        elif req.get("function") not in PURPOSE_FUNCTIONS:
            diag.add("script", key, "function must be a purpose function")
        elif maze is not None and not maze.in_bounds(Position(*req.get("origin", (-1, -1)))):
            diag.add("script", key, "origin outside the maze")
        else:
            script.requests.append(dict(req))
    for i, fault in enumerate(spec.get("faults", []) or []):
        key = f"faults[{i}]"
        if not isinstance(fault, dict) or set(fault) - {"agent", "function", "contracts"}:
            diag.add("script", key, "unknown or malformed fault")
        elif fault.get("agent") not in ids or fault.get("function") not in PURPOSE_FUNCTIONS:
            diag.add("script", key, "needs a known agent and purpose function")
        else:
            script.faults.append(dict(fault))
    for i, act in enumerate(spec.get("actions", []) or []):
        key = f"actions[{i}]"
        if not isinstance(act, dict) or set(act) != {"agent", "tick", "action"}:
            diag.add("script", key, "needs exactly agent, tick, action")
        elif act["agent"] not in ids:
            diag.add("script", key, "unknown agent")
        elif not _parses_as_action(act["action"]):
            diag.add("script", key, f"unknown action {act['action']!r}")
        else:
            script.actions.append(dict(act))
    return script


def _parses_as_action(label: Any) -> bool:
    try:
        Action.parse(str(label))
    except ValueError:
        return False
    return True
