"""4-neighbor grid maps: parsing, validation and movement queries.

Maps use the MovingAI benchmark text format. Despite the ``type octile``
header line, movement is strictly 4-neighbor: up, down, left, right, wait.
Coordinates are (row, col) with row 0 at the top line of the file.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import MapFormatError, ScenarioFormatError

Location = tuple[int, int]

FREE_CHARS = frozenset(".G")
BLOCKED_CHARS = frozenset("@TO")


class Action(IntEnum):
    """The five canonical actions, in fixed order."""

    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    WAIT = 4


# (d_row, d_col) per action, indexed by Action value.
ACTION_DELTAS: tuple[tuple[int, int], ...] = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))
MOVE_ACTIONS: tuple[Action, ...] = (Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT)
ACTION_LETTERS = "UDLRW"

_OPPOSITE = {
    Action.UP: Action.DOWN,
    Action.DOWN: Action.UP,
    Action.LEFT: Action.RIGHT,
    Action.RIGHT: Action.LEFT,
    Action.WAIT: Action.WAIT,
}


def opposite(action: Action) -> Action:
    return _OPPOSITE[action]


def apply_action(v: Location, a: Action) -> Location:
    """Return the location reached by taking ``a`` from ``v``.

    Bounds are not checked here; callers flag out-of-bounds results.
    """
    dr, dc = ACTION_DELTAS[a]
    return (v[0] + dr, v[1] + dc)


def action_between(u: Location, v: Location) -> Action:
    """The action mapping ``u`` to ``v``; raises ValueError if not adjacent."""
    delta = (v[0] - u[0], v[1] - u[1])
    for a, d in zip(Action, ACTION_DELTAS):
        if d == delta:
            return a
    raise ValueError(f"locations {u} and {v} are not adjacent or equal")


@dataclass(frozen=True, eq=False)
class GridMap:
    """Immutable 4-neighbor grid with a blocked-cell mask.

    ``blocked`` is a (height, width) boolean array, row-major, True where
    the cell cannot be entered. Safe for concurrent reads; compared and
    hashed by identity so graph builders can key caches on the instance.
    """

    height: int
    width: int
    blocked: np.ndarray

    def __post_init__(self):
        if self.blocked.shape != (self.height, self.width):
            raise ValueError("blocked mask shape does not match dimensions")
        self.blocked.setflags(write=False)

    @property
    def free_count(self) -> int:
        return int(self.blocked.size - np.count_nonzero(self.blocked))

    def in_bounds(self, v: Location) -> bool:
        return 0 <= v[0] < self.height and 0 <= v[1] < self.width

    def is_free(self, v: Location) -> bool:
        return self.in_bounds(v) and not self.blocked[v[0], v[1]]

    def free_cells(self) -> list[Location]:
        rows, cols = np.nonzero(~self.blocked)
        return list(zip(rows.tolist(), cols.tolist()))

    def cell_index(self, v: Location) -> int:
        return v[0] * self.width + v[1]

    def location_of(self, index: int) -> Location:
        return (index // self.width, index % self.width)


def neighbors(grid: GridMap, v: Location) -> list[tuple[Action, Location]]:
    """Wait plus every free in-bounds move from ``v``, Wait first.

    Raises ValueError if ``v`` itself is blocked or out of bounds.
    """
    if not grid.is_free(v):
        raise ValueError(f"{v} is blocked or out of bounds")
    result: list[tuple[Action, Location]] = [(Action.WAIT, v)]
    for a in MOVE_ACTIONS:
        u = apply_action(v, a)
        if grid.is_free(u):
            result.append((a, u))
    return result


def parse_map(text: str) -> GridMap:
    """Parse a MovingAI ``.map`` file.

    Cells '.' and 'G' are free; '@', 'T' and 'O' are blocked. Any other
    cell character, or a mismatch between header dimensions and body,
    is a hard error.
    """
    lines = text.splitlines()
    if len(lines) < 4:
        raise MapFormatError("map file shorter than the 4-line header")
    header = [line.strip() for line in lines[:4]]
    if header[0] != "type octile":
        raise MapFormatError(f"expected 'type octile' header, got {header[0]!r}")
    try:
        height = int(header[1].split()[1])
        width = int(header[2].split()[1])
    except (IndexError, ValueError) as exc:
        raise MapFormatError(f"bad height/width header lines: {header[1]!r}, {header[2]!r}") from exc
    if header[3] != "map":
        raise MapFormatError(f"expected 'map' header line, got {header[3]!r}")
    if height <= 0 or width <= 0:
        raise MapFormatError("empty map")

    body = [line.rstrip("\n") for line in lines[4:] if line.strip() != ""]
    if len(body) != height:
        raise MapFormatError(f"header says {height} rows, body has {len(body)}")
    blocked = np.zeros((height, width), dtype=bool)
    for r, row in enumerate(body):
        if len(row) != width:
            raise MapFormatError(f"row {r} has {len(row)} cells, expected {width}")
        for c, ch in enumerate(row):
            if ch in BLOCKED_CHARS:
                blocked[r, c] = True
            elif ch not in FREE_CHARS:
                raise MapFormatError(f"unknown cell character {ch!r} at ({r}, {c})")
    return GridMap(height, width, blocked)


def serialize_map(grid: GridMap) -> str:
    """Render a GridMap back to MovingAI text ('.' free, '@' blocked)."""
    rows = ["".join("@" if grid.blocked[r, c] else "." for c in range(grid.width))
            for r in range(grid.height)]
    return "\n".join(["type octile", f"height {grid.height}", f"width {grid.width}", "map"] + rows) + "\n"


def parse_scenario(grid: GridMap, text: str) -> tuple[int, list[Location]]:
    """Parse a scenario file: a ``seed <u64>`` header then ``agent_id row col`` lines.

    Returns (seed, starts) with starts ordered by agent id. Agent ids must be
    exactly 0..n-1; start cells must be free, in bounds and pairwise distinct.
    """
    lines = [line.strip() for line in text.splitlines() if line.strip() != ""]
    if not lines or not lines[0].startswith("seed"):
        raise ScenarioFormatError("scenario must begin with a 'seed <u64>' line")
    try:
        seed = int(lines[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise ScenarioFormatError(f"bad seed line: {lines[0]!r}") from exc
    if not 0 <= seed < 2**64:
        raise ScenarioFormatError(f"seed {seed} out of u64 range")

    entries: dict[int, Location] = {}
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != 3:
            raise ScenarioFormatError(f"bad agent line: {line!r}")
        try:
            agent_id, row, col = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ScenarioFormatError(f"bad agent line: {line!r}") from exc
        if agent_id in entries:
            raise ScenarioFormatError(f"duplicate agent id {agent_id}")
        if not grid.is_free((row, col)):
            raise ScenarioFormatError(f"agent {agent_id} start ({row}, {col}) is blocked or out of bounds")
        entries[agent_id] = (row, col)
    if not entries:
        raise ScenarioFormatError("scenario lists no agents")
    n = len(entries)
    if set(entries) != set(range(n)):
        raise ScenarioFormatError(f"agent ids must be exactly 0..{n - 1}")
    starts = [entries[i] for i in range(n)]
    if len(set(starts)) != n:
        raise ScenarioFormatError("agent start cells must be distinct")
    return seed, starts
