"""Turn-based multi-agent maze simulator with trust-sensitive allocation of function."""

from trustmaze.engine import RunResult, Simulation, replay_verify, run
from trustmaze.scenario import Scenario, load_scenario, parse_scenario, shipped_scenario_path

__all__ = [
    "RunResult",
    "Scenario",
    "Simulation",
    "load_scenario",
    "parse_scenario",
    "replay_verify",
    "run",
    "shipped_scenario_path",
]

__version__ = "0.1.0"
