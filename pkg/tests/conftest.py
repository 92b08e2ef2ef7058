from __future__ import annotations

import copy

import pytest

from trustmaze.scenario import load_scenario, parse_scenario, shipped_scenario_path

SHIPPED = ("default", "collector-fails", "integrity-breach")

FORWARD = [{"then": {"Forward": 1.0}}]


def scenario_doc(maze: str, agents: list[dict], cpts: dict | None = None, **sections) -> dict:
    """A minimal scenario document; every agent defaults to the ``walk`` table."""
    doc = {
        "schema_version": 1,
        "name": "test",
        "seed": 1,
        "maze": {"text": maze},
        "agents": [dict({"cpt": "walk", "heading": "N"}, **a) for a in agents],
        "cpts": dict({"walk": FORWARD}, **(cpts or {})),
        "allocation": {"triggers": {"trapped": True, "token_sighting": True, "follow_leader": False}},
    }
    for key, value in sections.items():
        doc[key] = value
    return doc


def build(maze: str, agents: list[dict], cpts: dict | None = None, **sections):
    return parse_scenario(copy.deepcopy(scenario_doc(maze, agents, cpts, **sections)))


@pytest.fixture(scope="session")
def shipped():
    return {name: load_scenario(shipped_scenario_path(name)) for name in SHIPPED}
