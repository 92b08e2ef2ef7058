"""Maze grid, ASCII loading/rendering, generation and hand-on-wall geometry.

Coordinates are ``(x, y)`` with ``x`` the column and ``y`` the row, both
0-based from the top-left corner.  North is ``y - 1``.
"""

from __future__ import annotations

import random
from collections import deque
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import NamedTuple


class MazeError(ValueError):
    """Base class for malformed maze input."""


class RaggedRows(MazeError):
    pass


class NoStart(MazeError):
    pass


class NoExit(MazeError):
    pass


class UnknownChar(MazeError):
    def __init__(self, char: str, position: Position) -> None:
        super().__init__(f"unknown maze character {char!r} at {tuple(position)}")
        self.char = char
        self.position = position


class TooSmall(MazeError):
    pass


class PlacementOverflow(MazeError):
    pass


class OutOfBounds(IndexError):
    pass


class Position(NamedTuple):
    x: int
    y: int

    def step(self, heading: Heading) -> Position:
        return Position(self.x + heading.dx, self.y + heading.dy)

    def manhattan(self, other: Position) -> int:
        return abs(self.x - other.x) + abs(self.y - other.y)


class Heading(Enum):
    NORTH = "N"
    EAST = "E"
    SOUTH = "S"
    WEST = "W"

    @property
    def dx(self) -> int:
        return _DELTAS[self][0]

    @property
    def dy(self) -> int:
        return _DELTAS[self][1]

    def left(self) -> Heading:
        return _ORDER[(_ORDER.index(self) - 1) % 4]

    def right(self) -> Heading:
        return _ORDER[(_ORDER.index(self) + 1) % 4]

    def reverse(self) -> Heading:
        return _ORDER[(_ORDER.index(self) + 2) % 4]

    @classmethod
    def between(cls, a: Position, b: Position) -> Heading:
        """Heading that takes ``a`` to the 4-neighbour ``b``."""
        delta = (b.x - a.x, b.y - a.y)
        for heading, d in _DELTAS.items():
            if d == delta:
                return heading
        raise ValueError(f"{a} and {b} are not 4-neighbours")


_ORDER = [Heading.NORTH, Heading.EAST, Heading.SOUTH, Heading.WEST]
_DELTAS = {
    Heading.NORTH: (0, -1),
    Heading.EAST: (1, 0),
    Heading.SOUTH: (0, 1),
    Heading.WEST: (-1, 0),
}


class Hand(Enum):
    LEFT = "Left"
    RIGHT = "Right"


class Cell(Enum):
    """Kinds of maze cell, valued by their file character.

    ``TRAP`` is an active red square; ``CLEARED`` is a red square that has
    been deactivated and behaves as a path for every role.
    """

    WALL = "#"
    PATH = "."
    TRAP = "T"
    CLEARED = "t"
    GATE = "G"
    START = "S"
    EXIT = "E"

    @property
    def traversable(self) -> bool:
        return self is not Cell.WALL

    @property
    def is_red(self) -> bool:
        return self in (Cell.TRAP, Cell.CLEARED)


_CHARS = {c.value: c for c in Cell}


@dataclass(frozen=True)
class Maze:
    width: int
    height: int
    cells: tuple[tuple[Cell, ...], ...]

    def __post_init__(self) -> None:
        if len(self.cells) != self.height or any(len(r) != self.width for r in self.cells):
            raise RaggedRows("all rows must have the maze width")
        if not self.starts:
            raise NoStart("maze has no start cell")
        if not self.exits:
            raise NoExit("maze has no exit cell")

    @cached_property
    def starts(self) -> tuple[Position, ...]:
        return tuple(p for p, c in self.items() if c is Cell.START)

    @cached_property
    def exits(self) -> tuple[Position, ...]:
        return tuple(p for p, c in self.items() if c is Cell.EXIT)

    def items(self) -> Iterator[tuple[Position, Cell]]:
        for y, row in enumerate(self.cells):
            for x, cell in enumerate(row):
                yield Position(x, y), cell

    def in_bounds(self, pos: Position) -> bool:
        return 0 <= pos.x < self.width and 0 <= pos.y < self.height

    def __getitem__(self, pos: Position) -> Cell:
        if not self.in_bounds(pos):
            raise OutOfBounds(f"{tuple(pos)} outside {self.width}x{self.height}")
        return self.cells[pos.y][pos.x]

    def kind_at(self, pos: Position) -> Cell:
        """Like indexing, but anything off the grid reads as wall."""
        return self.cells[pos.y][pos.x] if self.in_bounds(pos) else Cell.WALL

    def within(self, pos: Position, radius: int) -> Iterator[tuple[Position, Cell]]:
        """Cells at Manhattan distance <= ``radius`` from ``pos``, row-major."""
        for y in range(max(0, pos.y - radius), min(self.height, pos.y + radius + 1)):
            span = radius - abs(y - pos.y)
            row = self.cells[y]
            for x in range(max(0, pos.x - span), min(self.width, pos.x + span + 1)):
                yield Position(x, y), row[x]

    def open_cells(self) -> list[Position]:
        return [p for p, c in self.items() if c.traversable]

    def count(self, kind: Cell) -> int:
        return sum(row.count(kind) for row in self.cells)

    def neighbours(self, pos: Position) -> list[Position]:
        return [pos.step(h) for h in _ORDER if self.in_bounds(pos.step(h))]


def load_maze(text: str) -> Maze:
    """Parse the ASCII maze format (one row per line, see :class:`Cell`)."""
    if text.endswith("\n"):
        text = text[:-1]
    if not text:
        raise MazeError("empty maze text")
    lines = text.split("\n")
    width = len(lines[0])
    if any(len(line) != width for line in lines):
        raise RaggedRows(f"row lengths differ: {[len(line) for line in lines]}")
    rows = []
    for y, line in enumerate(lines):
        row = []
        for x, ch in enumerate(line):
            if ch not in _CHARS:
                raise UnknownChar(ch, Position(x, y))
            row.append(_CHARS[ch])
        rows.append(tuple(row))
    return Maze(width, len(rows), tuple(rows))


def render(maze: Maze) -> str:
    return "\n".join("".join(c.value for c in row) for row in maze.cells)


def set_cell(maze: Maze, pos: Position, kind: Cell) -> Maze:
    if not maze.in_bounds(pos):
        raise OutOfBounds(f"{tuple(pos)} outside {maze.width}x{maze.height}")
    row = list(maze.cells[pos.y])
    row[pos.x] = kind
    cells = maze.cells[: pos.y] + (tuple(row),) + maze.cells[pos.y + 1 :]
    return replace(maze, cells=cells)


def generate_maze(
    width: int,
    height: int,
    token_count: int = 0,
    gate_count: int = 0,
    seed: int = 0,
) -> Maze:
    """Carve a perfect maze by randomized depth-first search.

    Rooms sit on odd coordinates.  The start is the bottom-left room and the
    exit is punched through the top boundary above the top-right room, so
    the exit is a leaf of the spanning tree.  Tokens and gates go on
    distinct rooms/corridors other than the start.
    """
    if width < 5 or height < 5 or width % 2 == 0 or height % 2 == 0:
        raise TooSmall(f"maze must be odd and at least 5x5, got {width}x{height}")
    rng = random.Random(seed)
    grid = [[Cell.WALL] * width for _ in range(height)]
    start = Position(1, height - 2)
    grid[start.y][start.x] = Cell.PATH
    stack = [start]
    while stack:
        here = stack[-1]
        options = []
        for h in _ORDER:
            nxt = Position(here.x + 2 * h.dx, here.y + 2 * h.dy)
            if 0 < nxt.x < width - 1 and 0 < nxt.y < height - 1 and grid[nxt.y][nxt.x] is Cell.WALL:
                options.append((h, nxt))
        if not options:
            stack.pop()
            continue
        h, nxt = rng.choice(options)
        grid[here.y + h.dy][here.x + h.dx] = Cell.PATH
        grid[nxt.y][nxt.x] = Cell.PATH
        stack.append(nxt)

    candidates = [
        Position(x, y)
        for y in range(height)
        for x in range(width)
        if grid[y][x] is Cell.PATH and (x, y) != start
    ]
    if token_count < 0 or gate_count < 0 or token_count + gate_count > len(candidates):
        raise PlacementOverflow(
            f"cannot place {token_count} tokens and {gate_count} gates on {len(candidates)} cells"
        )
    chosen = rng.sample(candidates, token_count + gate_count)
    for i, pos in enumerate(chosen):
        grid[pos.y][pos.x] = Cell.TRAP if i < token_count else Cell.GATE
    grid[start.y][start.x] = Cell.START
    grid[0][width - 2] = Cell.EXIT
    return Maze(width, height, tuple(tuple(r) for r in grid))


def wall_follow_step(
    maze: Maze, pos: Position, heading: Heading, hand: Hand
) -> tuple[Position, Heading]:
    """One step of the hand-on-wall rule.

    Preference order is hand side, straight, opposite side, reverse.  The
    agent turns and advances in the same step.  Enclosed on all four sides,
    it stays put and faces the other way.
    """
    side = heading.left() if hand is Hand.LEFT else heading.right()
    other = heading.right() if hand is Hand.LEFT else heading.left()
    for h in (side, heading, other, heading.reverse()):
        nxt = pos.step(h)
        if maze.kind_at(nxt).traversable:
            return nxt, h
    return pos, heading.reverse()


def bfs_distances(
    maze: Maze,
    source: Position,
    passable: Callable[[Cell], bool] | None = None,
) -> dict[Position, int]:
    """Shortest 4-connected step counts from ``source`` to every reachable cell.

    ``passable`` decides which cells may be entered; the source itself is
    always included.  Defaults to every non-wall cell.
    """
    ok = passable or (lambda c: c.traversable)
    dist = {source: 0}
    queue = deque([source])
    while queue:
        here = queue.popleft()
        for nxt in maze.neighbours(here):
            if nxt not in dist and ok(maze[nxt]):
                dist[nxt] = dist[here] + 1
                queue.append(nxt)
    return dist


def next_step_towards(
    maze: Maze,
    source: Position,
    goals: Iterable[Position],
    passable: Callable[[Cell], bool] | None = None,
) -> Position | None:
    """First cell on a shortest path from ``source`` to the nearest goal.

    Returns ``source`` when already on a goal and ``None`` when no goal is
    reachable.  Among equally short paths the neighbour order N, E, S, W of
    the reversed search decides, which keeps the choice deterministic.
    """
    targets = set(goals)
    if source in targets:
        return source
    ok = passable or (lambda c: c.traversable)
    # search from the goals back to the source so the first hop is direct
    dist: dict[Position, int] = {}
    queue: deque[Position] = deque()
    for g in sorted(targets):
        if maze.in_bounds(g):
            dist[g] = 0
            queue.append(g)
    while queue:
        here = queue.popleft()
        if here == source:
            break
        for nxt in maze.neighbours(here):
            if nxt in dist:
                continue
            if nxt != source and not ok(maze[nxt]):
                continue
            dist[nxt] = dist[here] + 1
            queue.append(nxt)
    if source not in dist:
        return None
    for nxt in maze.neighbours(source):
        if dist.get(nxt) == dist[source] - 1:
            return nxt
    return None
