"""Acceptance criteria, one test each, every test printing a PASS/FAIL line."""

from __future__ import annotations

import random
import time
from collections import deque

import pytest
from conftest import SHIPPED
from scipy.stats import chisquare

from trustmaze import Simulation, replay_verify, run
from trustmaze.agents import ActionCPT, AgentState, CPTRow, decide, perceive
from trustmaze.mission import GATHER, HELP, Violation
from trustmaze.roles import Role
from trustmaze.trust import (
    IntegrityLedger,
    Side,
    TrustModel,
    capability_total,
    default_capability,
    ladder_rung,
    update_integrity,
    update_predictability,
)
from trustmaze.world import Cell, Hand, Heading, Position, generate_maze, load_maze, wall_follow_step


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for a criterion, then assert it."""

    def report(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return report


def solo_walk(maze, limit):
    pos, heading = maze.starts[0], Heading.NORTH
    for step in range(1, limit + 1):
        pos, heading = wall_follow_step(maze, pos, heading, Hand.LEFT)
        if maze[pos] is Cell.EXIT:
            return step
    return None


def oracle_bfs(maze):
    """Plain grid BFS from the start to the nearest exit, independent of the package's search."""
    start = maze.starts[0]
    seen = {start: 0}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        if maze.cells[y][x] is Cell.EXIT:
            return seen[(x, y)]
        for nx_, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if 0 <= nx_ < maze.width and 0 <= ny < maze.height and maze.cells[ny][nx_] is not Cell.WALL:
                if (nx_, ny) not in seen:
                    seen[(nx_, ny)] = seen[(x, y)] + 1
                    queue.append((nx_, ny))
    return None


def test_1_capability_totals(verdict):
    m = default_capability()
    expected = {
        Role.LEADER: (6, 2),
        Role.COLLECTOR: (9, 3),
        Role.GATE_USER: (5, 2),
        Role.NEUTRAL: (9, 5),
    }
    got = {r: (capability_total(m, r, Side.PERFORMER), capability_total(m, r, Side.SUPPORTER)) for r in expected}
    verdict(1, got == expected, f"performer/supporter totals {[got[r] for r in expected]}")


def test_2_cpt_fidelity(verdict, shipped):
    worst = max(
        abs(sum(p for _, p in row.outcomes) - 1)
        for s in shipped.values()
        for cpt in s.cpts.values()
        for row in cpt.rows
    )
    goals = {"maximise teamwork": 0.8, "minimise gate": 0.1, "maximise tokens": 0.1}
    a = AgentState(0, Role.GATE_USER, Position(1, 1), goal_weights=dict(goals))
    maze = load_maze("#####\n#S.E#\n#####")
    cpt = ActionCPT([CPTRow({}, (("Forward", 1.0),))])
    rng = random.Random(42)
    counts = dict.fromkeys(goals, 0)
    for _ in range(10_000):
        counts[decide(a, perceive(a, maze, [a], []), cpt, rng).goal] += 1
    p = chisquare([counts[g] for g in goals], [10_000 * q for q in goals.values()]).pvalue
    verdict(2, worst <= 1e-9 and p > 0.01, f"max row error {worst:.2e}, goal row chi-square p = {p:.3f}")


def test_3_wall_follow_completeness(verdict):
    began = time.perf_counter()
    sizes = [(w, h) for w in range(5, 22, 2) for h in range(5, 22, 2)]
    misses = []
    for seed in range(100):
        w, h = sizes[(seed * 7) % len(sizes)] if seed < 90 else (21, 21)
        maze = generate_maze(w, h, 0, 0, seed)
        if solo_walk(maze, 4 * len(maze.open_cells())) is None:
            misses.append((seed, w, h))
    elapsed = time.perf_counter() - began
    verdict(3, not misses and elapsed < 30, f"100 mazes, misses {misses}, {elapsed:.2f} s")


def test_4_collector_fails(verdict, shipped):
    r = run(shipped["collector-fails"])
    pred = r.trust.predictability.estimate(0, 1, GATHER)
    mean_rung = r.trust.mean_rung(1, GATHER)
    crossing = [
        e for e in r.trace
        if e.kind == "TrustUpdated" and e.payload["target"] == 1 and e.payload["function"] == GATHER
        and e.payload["rung_before"] >= 2 > e.payload["rung"]
    ]
    after = [e for e in r.trace if crossing and e.tick > crossing[0].tick]
    next_gather = next(
        (e for e in after if e.kind in ("ContractAccepted", "AllocationFailed") and e.payload["function"] == GATHER),
        None,
    )
    switches = [e for e in r.trace if e.kind == "ContractAccepted" and e.payload["allocation_switch"]]
    help_switch = [e for e in switches if e.payload["function"] == HELP
                   and e.payload["most_suitable"] == 3 and e.payload["performer"] == 1]
    ok = (
        pred == 0.25
        and mean_rung < 2
        and next_gather is not None
        and next_gather.kind == "AllocationFailed"
        and next_gather.payload["reason"] == "NoCapableCandidate"
        and len(switches) >= 1
        and bool(help_switch)
        and r.trust.mean_rung(3, HELP) < 2
        and bool(crossing)
    )
    verdict(
        4,
        ok,
        f"predictability {pred}, mean rung {mean_rung}, next gather "
        f"{next_gather.payload.get('reason', next_gather.kind) if next_gather else None}, "
        f"switches {len(switches)}, rung crossings {len(crossing)}",
    )


def test_5_integrity_filter(verdict, shipped):
    trace = run(shipped["integrity-breach"]).trace
    hard = [e for e in trace if e.kind == "Violation" and e.payload["hard"]]
    violator, at = hard[0].payload["agent"], hard[0].tick
    later = [
        e for e in trace
        if e.kind == "ContractAccepted" and e.tick > at and e.payload["performer"] == violator
    ]
    verdict(5, bool(hard) and not later, f"hard violation by {violator} at tick {at}, later acceptances {len(later)}")


def test_6_determinism_and_replay(verdict, shipped):
    problems = []
    for name in SHIPPED:
        s = shipped[name]
        a, b = run(s), run(s)
        if a.trace_text().encode() != b.trace_text().encode():
            problems.append(f"{name}: traces differ")
        if not replay_verify(a.trace, s).match:
            problems.append(f"{name}: replay mismatch")
    verdict(6, not problems, f"{len(SHIPPED)} scenarios, problems {problems}")


def test_7_conservation(verdict, shipped):
    broken = []
    ticks = 0
    for name in SHIPPED:
        sim = Simulation(shipped[name])
        while not sim.done:
            sim.tick()
            ticks += 1
            led = sim.token_ledger()
            if led["collected"] + led["active"] + led["deactivated"] != led["initial"]:
                broken.append((name, sim.t, led))
    verdict(7, not broken, f"{ticks} ticks checked, breaks {broken[:3]}")


def test_8_trust_properties(verdict):
    rng = random.Random(8)
    roles = {0: Role.LEADER, 1: Role.NEUTRAL}
    soft, hard = Violation("minimise time", 1, hard=False), Violation("zone", 1, hard=True)
    failures = []
    sequences = 1000
    for n in range(sequences):
        raw = [rng.random() for _ in range(3)]
        weights = tuple(x / sum(raw) for x in raw)
        cap = default_capability()
        cap.performer[(Role.NEUTRAL, HELP)] = rng.randint(0, 3)
        model = TrustModel(roles, capability=cap, weights=weights, integrity=IntegrityLedger(recovery=rng.uniform(1, 1.5)))
        seen = []
        for _ in range(rng.randint(1, 40)):
            step = rng.choice(("ok", "fail", "soft", "hard", "recover"))
            before = model.record(0, 1, HELP).predictability
            if step in ("ok", "fail"):
                update_predictability(model.predictability, 0, 1, HELP, step == "ok")
            elif step == "soft":
                update_integrity(model.integrity, 0, 1, soft)
            elif step == "hard":
                update_integrity(model.integrity, 0, 1, hard)
            else:
                model.integrity.recover()
            rec = model.record(0, 1, HELP)
            if step == "ok" and rec.predictability < before:
                failures.append((n, "success lowered predictability"))
            if not all(0 <= v <= 1 for v in (rec.capability_norm, rec.predictability, rec.integrity, rec.composite)):
                failures.append((n, "out of [0, 1]"))
            seen.append((rec.composite, rec.rung))
        seen.sort()
        if any(r1 > r2 for (_, r1), (_, r2) in zip(seen, seen[1:])):
            failures.append((n, "rung not monotone"))
    grid = [i / 1000 for i in range(1001)]
    if any(ladder_rung(a) > ladder_rung(b) for a, b in zip(grid, grid[1:])):
        failures.append(("grid", "rung not monotone"))
    verdict(8, not failures, f"{sequences} random sequences, failures {failures[:3]}")


def test_9_oracle_bound(verdict, shipped):
    s = shipped["default"]
    shortest = oracle_bfs(s.maze)
    bound = 4 * len(s.maze.open_cells())
    ticks = run(s).metrics["ticks_to_all_escape"]
    ok = ticks is not None and shortest <= ticks <= bound
    verdict(9, ok, f"BFS {shortest} <= team ticks {ticks} <= wall-follow bound {bound}")
