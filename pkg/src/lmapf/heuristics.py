"""Global-guidance heuristic fields and the edge-cost models that induce them.

Three kinds of guidance are supported, all exposed as a per-goal scalar
field h(v):

* plain backward shortest distances under uniform edge costs ("bd"),
* backward distances under crisscross one-way highway costs ("sg"),
* per-agent fields built around a traffic-aware guide path ("dg"), where
  h(v) is the cheapest way to join the guide path and follow it to the
  goal: min over path vertices p of SPCost(v, p) + remaining_cost(p).

Fields are computed over the reversed edge graph so that asymmetric cost
models (crisscross) charge the cost of actually travelling toward the goal.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from weakref import WeakKeyDictionary

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .errors import UnreachableGoalError
from .grid import ACTION_DELTAS, Action, GridMap, Location, action_between, opposite

INF = np.inf

#: Cost of a wait step, charged as one time unit everywhere an action
#: sequence is priced (windowed objectives, guide-path remaining cost).
WAIT_COST = 1.0

STRICT_DISCOURAGED = 100000.0
SOFT_DISCOURAGED = 3.0


@dataclass(frozen=True)
class EdgeCostModel:
    """Directed edge costs for one guidance mode.

    ``uniform`` charges ``base_cost`` per move; ``crisscross`` charges
    ``encouraged_cost`` along the highway direction of each row/column and
    ``discouraged_cost`` against it; ``traffic`` charges ``base_cost`` plus
    congestion penalties (applied only when planning guide paths).
    """

    mode: str
    base_cost: float = 1.0
    encouraged_cost: float = 1.0
    discouraged_cost: float = 1.0
    c_vertex: float = 0.0
    c_edge: float = 0.0

    def __post_init__(self):
        if self.mode not in ("uniform", "crisscross", "traffic"):
            raise ValueError(f"unknown cost mode {self.mode!r}")
        for name in ("base_cost", "encouraged_cost", "discouraged_cost"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.encouraged_cost <= self.base_cost <= self.discouraged_cost:
            raise ValueError("need encouraged_cost <= base_cost <= discouraged_cost")


def uniform_costs(base: float = 1.0) -> EdgeCostModel:
    return EdgeCostModel("uniform", base_cost=base, encouraged_cost=base, discouraged_cost=base)


def crisscross_costs(profile: str = "strict") -> EdgeCostModel:
    """One-way highway costs alternating row by row and column by column.

    Default edge cost 2, encouraged direction 1. The opposite direction
    costs 100000 under the ``strict`` profile (warehouse/sortation layouts)
    and 3 under ``soft`` (other maps). Even rows encourage Right, odd rows
    Left; even columns encourage Down, odd columns Up.
    """
    if profile not in ("strict", "soft"):
        raise ValueError(f"unknown crisscross profile {profile!r}")
    disc = STRICT_DISCOURAGED if profile == "strict" else SOFT_DISCOURAGED
    return EdgeCostModel("crisscross", base_cost=2.0, encouraged_cost=1.0, discouraged_cost=disc)


def traffic_costs(base: float = 1.0, c_vertex: float = 1.0, c_edge: float = 2.0) -> EdgeCostModel:
    if c_vertex < 0 or c_edge < 0:
        raise ValueError("traffic weights must be non-negative")
    return EdgeCostModel("traffic", base_cost=base, encouraged_cost=base,
                         discouraged_cost=base, c_vertex=c_vertex, c_edge=c_edge)


def base_model(costs: EdgeCostModel) -> EdgeCostModel:
    """The congestion-free model underlying ``costs``."""
    if costs.mode == "traffic":
        return uniform_costs(costs.base_cost)
    return costs


def _crisscross_direction_encouraged(a: Action, v: Location) -> bool:
    # Horizontal edges take their row's direction, vertical their column's.
    if a == Action.RIGHT:
        return v[0] % 2 == 0
    if a == Action.LEFT:
        return v[0] % 2 == 1
    if a == Action.DOWN:
        return v[1] % 2 == 0
    if a == Action.UP:
        return v[1] % 2 == 1
    raise ValueError("wait is not an edge")


def move_cost(costs: EdgeCostModel, u: Location, v: Location) -> float:
    """Cost of the single step u -> v (wait when u == v)."""
    if u == v:
        return WAIT_COST
    if costs.mode != "crisscross":
        return costs.base_cost
    a = action_between(u, v)
    return costs.encouraged_cost if _crisscross_direction_encouraged(a, u) else costs.discouraged_cost


def directed_cost_grid(grid: GridMap, costs: EdgeCostModel) -> np.ndarray:
    """Per-action move costs: out[a, r, c] prices the edge (r,c) -> (r,c)+delta(a).

    Entries are +inf where the source or target cell is blocked or out of
    bounds. Congestion terms of ``traffic`` models are not included here;
    see :func:`plan_guide_path`.
    """
    h, w = grid.height, grid.width
    out = np.full((4, h, w), INF)
    if costs.mode == "crisscross":
        rows = np.arange(h)[:, None]
        cols = np.arange(w)[None, :]
        enc, dis = costs.encouraged_cost, costs.discouraged_cost
        out[Action.RIGHT] = np.where(rows % 2 == 0, enc, dis)
        out[Action.LEFT] = np.where(rows % 2 == 1, enc, dis)
        out[Action.DOWN] = np.where(cols % 2 == 0, enc, dis)
        out[Action.UP] = np.where(cols % 2 == 1, enc, dis)
    else:
        out[:4] = costs.base_cost
    free = ~grid.blocked
    for a in range(4):
        dr, dc = ACTION_DELTAS[a]
        ok = np.zeros((h, w), dtype=bool)
        src = (slice(max(0, -dr), h - max(0, dr)), slice(max(0, -dc), w - max(0, dc)))
        dst = (slice(max(0, dr), h + min(0, dr) or None), slice(max(0, dc), w + min(0, dc) or None))
        ok[src] = free[src] & free[dst]
        out[a] = np.where(ok, out[a], INF)
    return out


class _EdgeIndex:
    """Flattened directed-edge arrays for one grid, shared by CSR builders."""

    def __init__(self, grid: GridMap):
        h, w = grid.height, grid.width
        free = ~grid.blocked
        idx = np.arange(h * w).reshape(h, w)
        srcs, dsts, acts = [], [], []
        for a in range(4):
            dr, dc = ACTION_DELTAS[a]
            src = (slice(max(0, -dr), h - max(0, dr)), slice(max(0, -dc), w - max(0, dc)))
            dst = (slice(max(0, dr), h + min(0, dr) or None), slice(max(0, dc), w + min(0, dc) or None))
            ok = free[src] & free[dst]
            srcs.append(idx[src][ok])
            dsts.append(idx[dst][ok])
            acts.append(np.full(int(ok.sum()), a, dtype=np.int8))
        self.src = np.concatenate(srcs)
        self.dst = np.concatenate(dsts)
        self.action = np.concatenate(acts)
        self.n_cells = h * w

    def csr(self, data: np.ndarray, reverse: bool) -> sp.csr_matrix:
        rows, cols = (self.dst, self.src) if reverse else (self.src, self.dst)
        n = self.n_cells
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


_edge_index_cache: WeakKeyDictionary = WeakKeyDictionary()


def _edge_index(grid: GridMap) -> _EdgeIndex:
    index = _edge_index_cache.get(grid)
    if index is None:
        index = _EdgeIndex(grid)
        _edge_index_cache[grid] = index
    return index


def _edge_data(index: _EdgeIndex, cost_grid: np.ndarray) -> np.ndarray:
    flat = cost_grid.reshape(4, -1)
    return flat[index.action, index.src]


@dataclass(frozen=True, eq=False)
class GuidanceField:
    """Heuristic values h(v) toward one goal; +inf marks unreachable cells."""

    goal: Location
    mode: str  # "bd" | "sg" | "dg"
    values: np.ndarray  # (height, width) float64

    def __post_init__(self):
        self.values.setflags(write=False)

    def h(self, v: Location) -> float:
        return float(self.values[v[0], v[1]])


def _field_mode(costs: EdgeCostModel) -> str:
    return "sg" if costs.mode == "crisscross" else "bd"


def backward_dijkstra(grid: GridMap, goal: Location, costs: EdgeCostModel) -> GuidanceField:
    """Minimum path cost from every cell to ``goal`` under ``costs``.

    Computed over reversed edges so the forward cost of each move is
    charged. Uniform models take a fast BFS path; asymmetric models run
    Dijkstra on the reversed sparse graph.
    """
    if not grid.is_free(goal):
        raise ValueError(f"goal {goal} is blocked or out of bounds")
    if costs.mode != "crisscross":
        from ._fast import grid_bfs_distances

        hops = grid_bfs_distances(grid.blocked, grid.cell_index(goal))
        values = (hops * costs.base_cost).reshape(grid.height, grid.width)
    else:
        index = _edge_index(grid)
        g = index.csr(_edge_data(index, directed_cost_grid(grid, costs)), reverse=True)
        dist = _csgraph_dijkstra(g, indices=grid.cell_index(goal))
        values = dist.reshape(grid.height, grid.width)
    return GuidanceField(goal=goal, mode=_field_mode(costs), values=values)


class FieldCache:
    """LRU cache of per-goal guidance fields for one (grid, cost model)."""

    def __init__(self, grid: GridMap, costs: EdgeCostModel, capacity: int = 4096):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.grid = grid
        self.costs = costs
        self.capacity = capacity
        self._fields: OrderedDict[Location, GuidanceField] = OrderedDict()

    def get(self, goal: Location) -> GuidanceField:
        field = self._fields.get(goal)
        if field is not None:
            self._fields.move_to_end(goal)
            return field
        field = backward_dijkstra(self.grid, goal, self.costs)
        self._fields[goal] = field
        if len(self._fields) > self.capacity:
            self._fields.popitem(last=False)
        return field

    def __len__(self) -> int:
        return len(self._fields)


@dataclass
class GuidePath:
    """A congestion-avoiding path to an agent's goal.

    ``remaining_cost[j]`` prices the rest of the path from vertex j to the
    goal under the congestion-free base model, so it is a distance rather
    than a congestion score.
    """

    agent_id: int
    path: list[Location]
    remaining_cost: np.ndarray

    def __post_init__(self):
        if not self.path:
            raise ValueError("guide path may not be empty")
        if len(self.remaining_cost) != len(self.path):
            raise ValueError("remaining_cost length must match path length")


@dataclass
class TrafficCounts:
    """How many registered guide paths visit each cell / traverse each edge.

    ``edge_traversals[a, r, c]`` counts traversals of the directed edge from
    (r, c) via action ``a``.
    """

    vertex_visits: np.ndarray  # (height, width) int64
    edge_traversals: np.ndarray  # (4, height, width) int64
    registered_vertices: int = 0

    @classmethod
    def empty(cls, grid: GridMap) -> "TrafficCounts":
        return cls(
            vertex_visits=np.zeros((grid.height, grid.width), dtype=np.int64),
            edge_traversals=np.zeros((4, grid.height, grid.width), dtype=np.int64),
        )

    def _apply(self, guide: GuidePath, sign: int) -> None:
        for v in guide.path:
            self.vertex_visits[v] += sign
        for u, v in zip(guide.path, guide.path[1:]):
            if u != v:
                self.edge_traversals[action_between(u, v), u[0], u[1]] += sign
        self.registered_vertices += sign * len(guide.path)


def update_traffic(traffic: TrafficCounts, old: GuidePath | None, new: GuidePath | None) -> TrafficCounts:
    """Swap ``old`` for ``new`` in the counts; decrementing below zero raises.

    Either side may be None (pure add / pure remove). Returns ``traffic``.
    """
    if old is not None:
        traffic._apply(old, -1)
        if (traffic.vertex_visits < 0).any() or (traffic.edge_traversals < 0).any():
            traffic._apply(old, +1)
            raise ValueError("removing a guide path that was never registered")
    if new is not None:
        traffic._apply(new, +1)
    return traffic


def plan_guide_path(
    grid: GridMap,
    start: Location,
    goal: Location,
    traffic: TrafficCounts,
    costs: EdgeCostModel,
    agent_id: int = -1,
) -> GuidePath:
    """Minimum-cost start->goal path under congestion-penalized edge costs.

    The cost of moving u -> v is base + c_vertex * visits(v) plus
    c_edge * traversals(v -> u), punishing entry to frequently visited
    cells and motion against the prevailing flow on an edge.
    """
    if not grid.is_free(start) or not grid.is_free(goal):
        raise ValueError("start and goal must be free cells")
    base = base_model(costs)
    if start == goal:
        return GuidePath(agent_id=agent_id, path=[start], remaining_cost=np.zeros(1))

    cost_grid = directed_cost_grid(grid, base).copy()
    if costs.mode == "traffic" and (costs.c_vertex > 0 or costs.c_edge > 0):
        h, w = grid.height, grid.width
        for a in range(4):
            dr, dc = ACTION_DELTAS[a]
            src = (slice(max(0, -dr), h - max(0, dr)), slice(max(0, -dc), w - max(0, dc)))
            dst = (slice(max(0, dr), h + min(0, dr) or None), slice(max(0, dc), w + min(0, dc) or None))
            penalty = (costs.c_vertex * traffic.vertex_visits[dst]
                       + costs.c_edge * traffic.edge_traversals[opposite(Action(a)), dst[0], dst[1]])
            cost_grid[a][src] += penalty

    index = _edge_index(grid)
    g = index.csr(_edge_data(index, cost_grid), reverse=False)
    start_idx, goal_idx = grid.cell_index(start), grid.cell_index(goal)
    dist, pred = _csgraph_dijkstra(g, indices=start_idx, return_predecessors=True)
    if not np.isfinite(dist[goal_idx]):
        raise UnreachableGoalError(f"no path from {start} to {goal}")

    cells = [goal_idx]
    while cells[-1] != start_idx:
        cells.append(int(pred[cells[-1]]))
    path = [grid.location_of(i) for i in reversed(cells)]

    remaining = np.zeros(len(path))
    for j in range(len(path) - 2, -1, -1):
        remaining[j] = remaining[j + 1] + move_cost(base, path[j], path[j + 1])
    return GuidePath(agent_id=agent_id, path=path, remaining_cost=remaining)


def dynamic_guidance_field(grid: GridMap, guide: GuidePath, costs: EdgeCostModel) -> GuidanceField:
    """Field h(v) = SPCost(v, v') + remaining(v') for the nearest path vertex v'.

    v' is the closest guide-path location to v under the base cost model
    (ties to the earliest path vertex), so cells are attracted onto the
    guide path and then follow it, congestion detours included. On-path
    cells read exactly their remaining path cost; the goal reads 0.
    Computed with one labeled multi-source breadth-first pass.
    """
    from ._fast import grid_nearest_source

    base = base_model(costs)
    sources = np.fromiter((grid.cell_index(p) for p in guide.path), dtype=np.int64)
    hops, label = grid_nearest_source(grid.blocked, sources)
    remaining = np.asarray(guide.remaining_cost, dtype=float)
    values = np.full(grid.height * grid.width, INF)
    reached = label >= 0
    values[reached] = hops[reached] * base.base_cost + remaining[label[reached]]
    return GuidanceField(goal=guide.path[-1], mode="dg",
                         values=values.reshape(grid.height, grid.width))


def dump_field(field: GuidanceField) -> str:
    """Text grid of h values, one row per line, ``inf`` for unreachable."""
    lines = []
    for row in field.values:
        lines.append(" ".join("inf" if not np.isfinite(v) else format(v, "g") for v in row))
    return "\n".join(lines) + "\n"
