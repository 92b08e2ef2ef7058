"""Command-line entry point: ``trustmaze validate | simulate | batch``.

Exit codes are 0 on success, 2 for an invalid scenario or bad usage and 3
when a run fails.  ``TRUSTMAZE_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any

from trustmaze.engine import PLOT_COLUMNS, RunResult, run
from trustmaze.plotting import batch_figure, save, trust_figure
from trustmaze.scenario import InvalidScenario, Scenario, load_scenario, shipped_scenario_path

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3

log = logging.getLogger("trustmaze")


def _resolve(name: str) -> Path:
    """A scenario path, or the name of a shipped scenario."""
    path = Path(name)
    if path.exists() or path.suffix:
        return path
    return shipped_scenario_path(name)


def _load(name: str) -> Scenario | None:
    path = _resolve(name)
    try:
        return load_scenario(path)
    except OSError as err:
        print(f"[file] {path}: {err.strerror or err}", file=sys.stderr)
    except InvalidScenario as err:
        for d in err.diagnostics:
            print(str(d), file=sys.stderr)
    return None


def seed_range(text: str) -> list[int]:
    """Parse ``A..B`` (inclusive) or a single integer."""
    head, sep, tail = text.partition("..")
    try:
        lo = int(head)
        hi = int(tail) if sep else lo
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return list(range(lo, hi + 1))


def write_plot_data(rows: Sequence[tuple], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PLOT_COLUMNS)
        for row in sorted(rows, key=lambda r: r[:4]):
            writer.writerow(_fmt(v) for v in row)


def _fmt(value: Any) -> Any:
    return repr(value) if isinstance(value, float) else value


def _dump_json(data: Any, path: Path) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_outputs(result: RunResult, scenario: Scenario, out_dir: Path, stem: str = "") -> dict[str, Path]:
    """Trace, metrics, plot data and trust figure for one run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = f"{stem}-" if stem else ""
    paths = {
        "trace": out_dir / f"{prefix}trace.jsonl",
        "metrics": out_dir / f"{prefix}metrics.json",
        "plot": out_dir / f"{prefix}plot.csv",
        "figure": out_dir / f"{prefix}trust.png",
    }
    paths["trace"].write_text(result.trace_text(), encoding="utf-8")
    _dump_json(result.metrics, paths["metrics"])
    write_plot_data(result.trajectories, paths["plot"])
    roles = {a.id: a.role.value for a in scenario.agents}
    fig = trust_figure(result.trajectories, roles, scenario.trust.ladder, f"{scenario.name}, seed {result.metrics.get('seed', '')}")
    save(fig, paths["figure"])
    return paths


def _summary(name: str, seed: int, metrics: dict) -> str:
    ticks = metrics["ticks_to_all_escape"]
    ending = f"all out at tick {ticks}" if ticks is not None else f"timeout after {metrics['ticks_run']} ticks"
    return (
        f"{name} seed={seed}: {ending}, escaped={metrics['escaped']}, "
        f"tokens={metrics['tokens_collected']}, contracts={metrics['contracts_accepted']}, "
        f"switches={metrics['allocation_switches']}, violations={metrics['violations_soft'] + metrics['violations_hard']}"
    )


def _with_stride(scenario: Scenario, stride: int | None) -> Scenario:
    if stride is None:
        return scenario
    return replace(scenario, engine=replace(scenario.engine, plot_stride=stride))


def cmd_validate(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario)
    if scenario is None:
        return EXIT_INVALID
    if not args.quiet:
        print(f"{scenario.name}: ok ({len(scenario.agents)} agents, {scenario.maze.width}x{scenario.maze.height} maze)")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario)
    if scenario is None:
        return EXIT_INVALID
    scenario = _with_stride(scenario, args.plot_stride)
    seed = scenario.seed if args.seed is None else args.seed
    try:
        result = run(scenario, seed, args.max_ticks)
        result.metrics["seed"] = seed
        write_outputs(result, scenario, Path(args.out_dir))
    except Exception as err:  # engine faults are reported, not raised
        log.exception("run failed")
        print(f"run failed: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        print(_summary(scenario.name, seed, result.metrics))
    return EXIT_OK


def _batch_one(scenario: Scenario, seed: int, max_ticks: int | None, out_dir: Path) -> dict[str, Any]:
    try:
        result = run(scenario, seed, max_ticks)
        (out_dir / f"seed-{seed}-trace.jsonl").write_text(result.trace_text(), encoding="utf-8")
        return dict(result.metrics, seed=seed, error="")
    except Exception as err:
        return {"seed": seed, "error": f"{type(err).__name__}: {err}"}


BATCH_COLUMNS = (
    "seed",
    "ticks_run",
    "ticks_to_all_escape",
    "timeout",
    "escaped",
    "tokens_collected",
    "gates_entered",
    "releases",
    "messages_sent",
    "contracts_accepted",
    "contracts_completed",
    "contracts_failed",
    "allocation_failures",
    "allocation_switches",
    "violations_soft",
    "violations_hard",
    "error",
)


def aggregate(per_seed: Sequence[dict]) -> dict[str, Any]:
    """Means over the seeds that ran; ticks_to_all_escape only over seeds that finished."""
    ok = [m for m in per_seed if not m.get("error")]
    finished = [m["ticks_to_all_escape"] for m in ok if m["ticks_to_all_escape"] is not None]
    out: dict[str, Any] = {
        "seeds": [m["seed"] for m in per_seed],
        "runs_ok": len(ok),
        "runs_failed": len(per_seed) - len(ok),
        "all_escaped_runs": len(finished),
        "mean_ticks_to_all_escape": sum(finished) / len(finished) if finished else None,
    }
    for key in ("tokens_collected", "allocation_switches", "violations_soft", "violations_hard"):
        out[f"mean_{key}"] = sum(m[key] for m in ok) / len(ok) if ok else None
    return out


def cmd_batch(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario)
    if scenario is None:
        return EXIT_INVALID
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = args.seeds
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            futures = [pool.submit(_batch_one, scenario, s, args.max_ticks, out_dir) for s in seeds]
            per_seed = [f.result() for f in futures]
    else:
        per_seed = [_batch_one(scenario, s, args.max_ticks, out_dir) for s in seeds]
    per_seed.sort(key=lambda m: m["seed"])
    with (out_dir / "aggregate.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, BATCH_COLUMNS, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for m in per_seed:
            writer.writerow({k: ("" if m.get(k) is None else m.get(k)) for k in BATCH_COLUMNS})
    summary = aggregate(per_seed)
    _dump_json(summary, out_dir / "summary.json")
    save(batch_figure([m for m in per_seed if not m.get("error")], scenario.name), out_dir / "batch.png")
    failed = [m for m in per_seed if m.get("error")]
    for m in failed:
        print(f"seed {m['seed']} failed: {m['error']}", file=sys.stderr)
    if not args.quiet:
        mean = summary["mean_ticks_to_all_escape"]
        mean_text = f"{mean:.1f}" if mean is not None else "n/a"
        print(
            f"{scenario.name} seeds {seeds[0]}..{seeds[-1]}: {summary['runs_ok']} ok, "
            f"{summary['all_escaped_runs']} all-escaped, mean ticks to escape {mean_text}"
        )
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trustmaze", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="default", help="scenario file, or a shipped scenario name")
    common.add_argument("--quiet", action="store_true", help="suppress the summary line")

    runs = argparse.ArgumentParser(add_help=False)
    runs.add_argument("--max-ticks", type=int, help="override the scenario's tick limit")
    runs.add_argument("--out-dir", default=".", help="directory for all outputs")

    p = sub.add_parser("validate", parents=[common], help="check a scenario file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", parents=[common, runs], help="run one seed")
    p.add_argument("--seed", type=int, help="defaults to the scenario's seed")
    p.add_argument("--plot-stride", type=int, help="sample trust every N ticks")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("batch", parents=[common, runs], help="run a range of seeds")
    p.add_argument("--seeds", type=seed_range, required=True, help="inclusive range A..B")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("TRUSTMAZE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "plot_stride", None) is not None and args.plot_stride < 1:
        print("--plot-stride must be positive", file=sys.stderr)
        return EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
