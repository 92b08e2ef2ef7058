"""Matplotlib figures for trust trajectories and batch summaries.

Figures are built on the Agg canvas directly so nothing here touches
pyplot's global state or needs a display.
"""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Mapping, Sequence
from pathlib import Path

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from trustmaze.trust import TrustLadder


def trust_figure(
    rows: Sequence[tuple],
    roles: Mapping[int, str],
    ladder: TrustLadder = TrustLadder(),
    title: str = "",
) -> Figure:
    """Mean composite trust in each agent over time, one panel per function.

    ``rows`` are plot-data tuples ``(tick, observer, target, function,
    capability, predictability, integrity, composite, rung)``; observers
    are averaged so each line is how the team as a whole sees one agent.
    """
    series: dict[str, dict[int, dict[int, list[float]]]] = defaultdict(
        lambda: defaultdict(lambda: defaultdict(list))
    )
    for tick, _, target, fn, *_, composite, _ in rows:
        series[fn][target][tick].append(composite)
    functions = sorted(series)
    fig = Figure(figsize=(7, 2.2 * max(1, len(functions))), constrained_layout=True)
    FigureCanvasAgg(fig)
    axes = fig.subplots(max(1, len(functions)), 1, sharex=True, squeeze=False)[:, 0]
    for ax, fn in zip(axes, functions):
        for threshold in ladder.thresholds:
            ax.axhline(threshold, color="0.85", lw=0.8, zorder=0)
        for target in sorted(series[fn]):
            points = sorted(series[fn][target].items())
            ax.plot(
                [t for t, _ in points],
                [sum(v) / len(v) for _, v in points],
                lw=1.4,
                label=f"{target} {roles.get(target, '')}".strip(),
            )
        ax.set_ylim(0, 1)
        ax.set_ylabel("composite")
        ax.set_title(fn, fontsize=9, loc="left")
        ax.legend(fontsize=7, loc="lower left", frameon=False)
    axes[-1].set_xlabel("tick")
    if title:
        fig.suptitle(title, fontsize=10)
    return fig


def batch_figure(per_seed: Sequence[Mapping], title: str = "") -> Figure:
    """Ticks to all-escape per seed; timed-out seeds are drawn hollow at ticks run."""
    fig = Figure(figsize=(6, 3), constrained_layout=True)
    FigureCanvasAgg(fig)
    ax = fig.subplots()
    done = [(m["seed"], m["ticks_to_all_escape"]) for m in per_seed if m.get("ticks_to_all_escape") is not None]
    late = [(m["seed"], m["ticks_run"]) for m in per_seed if m.get("ticks_to_all_escape") is None and m.get("ticks_run") is not None]
    if done:
        ax.plot(*zip(*done), "o", color="tab:blue", label="all escaped")
    if late:
        ax.plot(*zip(*late), "o", mfc="none", color="tab:red", label="timeout")
    ax.set_xlabel("seed")
    ax.set_ylabel("ticks")
    ax.legend(fontsize=7, frameon=False)
    if title:
        ax.set_title(title, fontsize=10)
    return fig


def save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120)
    return path
