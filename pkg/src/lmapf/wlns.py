"""Windowed large-neighborhood refinement of short-horizon plans.

The planner rolls out w collision-resolution steps to get initial w-step
paths for all agents, then repeatedly destroys a small group of agents'
paths and replans them one by one with space-time search, accepting a
candidate only when the windowed objective strictly decreases:

    objective = sum over agents of
        (step costs inside the window) + guidance value at the horizon cell

Waiting costs one time unit. The guidance fields used here are the same
ones the observation encoder sees, so refined first actions are learnable
from the observations.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .grid import Action, GridMap, Location, action_between, apply_action
from .heuristics import EdgeCostModel, GuidanceField, move_cost
from .pibt import AgentState, JointAction, cs_pibt_step, pibt_step, rank_by_heuristic, update_priorities

_HUGE = 1e15  # stands in for +inf inside search keys


@dataclass
class WindowedPlan:
    """Per-agent paths over [start_step, start_step + window].

    ``paths[i]`` has window + 1 locations; index 0 is agent i's location at
    the window start.
    """

    start_step: int
    window: int
    paths: list[list[Location]]

    def replace(self, new_paths: dict[int, list[Location]]) -> "WindowedPlan":
        paths = [new_paths.get(i, p) for i, p in enumerate(self.paths)]
        return WindowedPlan(self.start_step, self.window, paths)


@dataclass
class LnsConfig:
    window: int = 15
    iterations: int = 5000
    neighborhood_size: int = 8
    selection_mode: str = "collision"  # "random" | "collision" | "intersection"
    seed: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.neighborhood_size < 2:
            raise ValueError("neighborhood_size must be >= 2")
        if self.selection_mode not in ("random", "collision", "intersection"):
            raise ValueError(f"unknown selection mode {self.selection_mode!r}")


def validate_plan(plan: WindowedPlan, grid: GridMap, agents: list[AgentState] | None = None) -> None:
    """Raise ValueError on any broken plan invariant.

    Checks path continuity, cell validity, agreement with the agents'
    current locations, and vertex/edge collision freedom at every step.
    """
    n = len(plan.paths)
    for i, path in enumerate(plan.paths):
        if len(path) != plan.window + 1:
            raise ValueError(f"agent {i} path has {len(path)} entries, expected {plan.window + 1}")
        for v in path:
            if not grid.is_free(v):
                raise ValueError(f"agent {i} path visits blocked cell {v}")
        for u, v in zip(path, path[1:]):
            action_between(u, v)  # raises when not adjacent or equal
    if agents is not None:
        for i, (agent, path) in enumerate(zip(agents, plan.paths)):
            if path[0] != agent.location:
                raise ValueError(f"agent {i} path starts at {path[0]}, agent is at {agent.location}")
    for t in range(plan.window + 1):
        cells = [path[t] for path in plan.paths]
        if len(set(cells)) != n:
            raise ValueError(f"vertex collision at window step {t}")
    for t in range(plan.window):
        for i in range(n):
            for j in range(i + 1, n):
                if plan.paths[i][t + 1] == plan.paths[j][t] and plan.paths[j][t + 1] == plan.paths[i][t]:
                    if plan.paths[i][t] != plan.paths[i][t + 1]:
                        raise ValueError(f"edge collision between agents {i} and {j} at step {t}")


def rollout_initial(
    agents: list[AgentState],
    grid: GridMap,
    policy,
    config: LnsConfig,
    rng: np.random.Generator | None = None,
    start_step: int = 0,
) -> WindowedPlan:
    """Run the one-step solver w times on a copy of the world.

    With a policy (any object exposing ``learned_actions(agents, grid)``)
    each step is shielded policy output; without one it is plain
    heuristic-ranked collision resolution. Goals are never resampled inside
    the window: an agent that arrives holds position preference through its
    zero guidance value.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    sim_agents = [a.clone() for a in agents]
    paths = [[a.location] for a in sim_agents]
    for _ in range(config.window):
        if policy is None:
            prefs = [rank_by_heuristic(a, grid, rng) for a in sim_agents]
            actions = pibt_step(sim_agents, grid, prefs)
        else:
            learned = policy.learned_actions(sim_agents, grid)
            actions = cs_pibt_step(sim_agents, grid, learned, rng)
        arrivals = set()
        for i, (agent, act) in enumerate(zip(sim_agents, actions)):
            agent.location = apply_action(agent.location, act)
            paths[i].append(agent.location)
            if agent.location == agent.goal:
                arrivals.add(agent.id)
        update_priorities(sim_agents, arrivals)
    return WindowedPlan(start_step=start_step, window=config.window, paths=paths)


def agent_objective(path: list[Location], costs: EdgeCostModel, field: GuidanceField) -> float:
    total = 0.0
    for u, v in zip(path, path[1:]):
        total += move_cost(costs, u, v)
    return total + float(field.values[path[-1]])


def objective(plan: WindowedPlan, costs: EdgeCostModel, fields: list[GuidanceField]) -> float:
    """Windowed step costs plus the guidance value at each horizon cell."""
    if len(fields) != len(plan.paths):
        raise ValueError(f"{len(plan.paths)} paths but {len(fields)} guidance fields")
    return sum(agent_objective(p, costs, f) for p, f in zip(plan.paths, fields))


def _delays(plan: WindowedPlan, agents: list[AgentState], costs: EdgeCostModel) -> np.ndarray:
    """Windowed cost above each agent's individual lower bound h(start)."""
    out = np.zeros(len(agents))
    for i, (agent, path) in enumerate(zip(agents, plan.paths)):
        actual = agent_objective(path, costs, agent.guidance)
        bound = float(agent.guidance.values[path[0]])
        if np.isfinite(actual) and np.isfinite(bound):
            out[i] = actual - bound
    return out


def _fill_random(chosen: list[int], n: int, size: int, rng: np.random.Generator) -> list[int]:
    if len(chosen) > size:
        return chosen[:size]
    pool = [i for i in range(n) if i not in set(chosen)]
    extra = rng.choice(len(pool), size=size - len(chosen), replace=False) if size > len(chosen) else []
    return chosen + [pool[int(k)] for k in extra]


def select_neighborhood(
    plan: WindowedPlan,
    agents: list[AgentState],
    mode: str,
    size: int,
    rng: np.random.Generator,
    grid: GridMap | None = None,
    costs: EdgeCostModel | None = None,
) -> list[int]:
    """Pick the agents whose windowed paths the next iteration replans.

    ``random`` samples uniformly. ``collision`` seeds with a most-delayed
    agent and grows through agents sharing cells with its path.
    ``intersection`` gathers agents passing through one randomly chosen
    high-degree cell. All modes return exactly ``min(size, n)`` ids.
    """
    n = len(agents)
    size = min(size, n)
    if size == n:
        return list(range(n))

    if mode == "random":
        return sorted(int(i) for i in rng.choice(n, size=size, replace=False))

    if mode == "collision":
        if costs is None:
            raise ValueError("collision mode needs a cost model")
        delays = _delays(plan, agents, costs)
        top = float(delays.max())
        seeds = [i for i in range(n) if delays[i] == top]
        seed = int(seeds[int(rng.integers(len(seeds)))])
        seed_cells = set(plan.paths[seed])
        overlapping = [i for i in range(n) if i != seed and seed_cells & set(plan.paths[i])]
        perm = rng.permutation(len(overlapping)) if overlapping else []
        chosen = [seed] + [overlapping[int(k)] for k in perm][: size - 1]
        return sorted(_fill_random(chosen, n, size, rng))

    if mode == "intersection":
        if grid is None:
            raise ValueError("intersection mode needs the grid")
        visited: dict[Location, list[int]] = {}
        for i, path in enumerate(plan.paths):
            for v in set(path):
                visited.setdefault(v, []).append(i)
        crossings = [v for v in visited if _cell_degree(grid, v) >= 3]
        if not crossings:
            return sorted(int(i) for i in rng.choice(n, size=size, replace=False))
        cell = crossings[int(rng.integers(len(crossings)))]
        members = visited[cell]
        perm = rng.permutation(len(members))
        chosen = [members[int(k)] for k in perm][:size]
        return sorted(_fill_random(chosen, n, size, rng))

    raise ValueError(f"unknown selection mode {mode!r}")


def _cell_degree(grid: GridMap, v: Location) -> int:
    return sum(grid.is_free(apply_action(v, a)) for a in Action if a != Action.WAIT)


def _space_time_search(
    grid: GridMap,
    start: Location,
    window: int,
    field: GuidanceField,
    costs: EdgeCostModel,
    vertex_blocked: set[tuple[Location, int]],
    edge_blocked: set[tuple[Location, Location, int]],
    rng: np.random.Generator,
) -> list[Location] | None:
    """Min-cost path over exactly ``window`` steps, honoring constraints.

    The guidance value doubles as the horizon cost and as a consistent
    search heuristic; f-ties are broken randomly so repeated replans explore
    different equally good paths.
    """
    values = field.values

    def h(v: Location) -> float:
        x = values[v[0], v[1]]
        return float(x) if np.isfinite(x) else _HUGE

    start_key = (0, start)
    best = {start_key: 0.0}
    parent: dict[tuple[int, Location], tuple[int, Location] | None] = {start_key: None}
    heap = [(h(start), rng.random(), 0, start)]
    while heap:
        f, _, t, v = heapq.heappop(heap)
        g = best.get((t, v))
        if g is None or f - h(v) > g + 1e-9:
            continue
        if t == window:
            path = [v]
            key = (t, v)
            while parent[key] is not None:
                key = parent[key]
                path.append(key[1])
            path.reverse()
            return path
        for a in Action:
            u = apply_action(v, a)
            if not grid.is_free(u):
                continue
            if (u, t + 1) in vertex_blocked:
                continue
            if u != v and (u, v, t) in edge_blocked:
                continue
            g2 = g + move_cost(costs, v, u)
            key = (t + 1, u)
            if g2 < best.get(key, np.inf) - 1e-12:
                best[key] = g2
                parent[key] = (t, v)
                heapq.heappush(heap, (g2 + h(u), rng.random(), t + 1, u))
    return None


def _path_constraints(path: list[Location], vertex_blocked, edge_blocked) -> None:
    for t, v in enumerate(path):
        vertex_blocked.add((v, t))
    for t, (u, v) in enumerate(zip(path, path[1:])):
        if u != v:
            edge_blocked.add((u, v, t))


def replan_neighborhood(
    plan: WindowedPlan,
    subset: list[int],
    grid: GridMap,
    costs: EdgeCostModel,
    fields: list[GuidanceField],
    rng: np.random.Generator,
) -> WindowedPlan | None:
    """Replan the subset one agent at a time in random order.

    Paths of agents outside the subset and already-replanned subset agents
    are hard vertex/edge constraints. Returns None as soon as any subset
    agent has no feasible windowed path (atomic accept).
    """
    if not subset:
        raise ValueError("subset may not be empty")
    vertex_blocked: set[tuple[Location, int]] = set()
    edge_blocked: set[tuple[Location, Location, int]] = set()
    in_subset = set(subset)
    for i, path in enumerate(plan.paths):
        if i not in in_subset:
            _path_constraints(path, vertex_blocked, edge_blocked)

    new_paths: dict[int, list[Location]] = {}
    order = [subset[int(k)] for k in rng.permutation(len(subset))]
    for i in order:
        path = _space_time_search(
            grid, plan.paths[i][0], plan.window, fields[i], costs,
            vertex_blocked, edge_blocked, rng,
        )
        if path is None:
            return None
        new_paths[i] = path
        _path_constraints(path, vertex_blocked, edge_blocked)
    return plan.replace(new_paths)


def refine(
    plan: WindowedPlan,
    agents: list[AgentState],
    grid: GridMap,
    costs: EdgeCostModel,
    fields: list[GuidanceField],
    config: LnsConfig,
    rng: np.random.Generator | None = None,
    objective_trace: list[float] | None = None,
) -> WindowedPlan:
    """k rounds of destroy/replan, keeping candidates that strictly improve."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    incumbent = plan
    per_agent = [agent_objective(p, costs, f) for p, f in zip(plan.paths, fields)]
    current = sum(per_agent)
    if objective_trace is not None:
        objective_trace.append(current)
    for _ in range(config.iterations):
        subset = select_neighborhood(
            incumbent, agents, config.selection_mode, config.neighborhood_size,
            rng, grid=grid, costs=costs,
        )
        candidate = replan_neighborhood(incumbent, subset, grid, costs, fields, rng)
        if candidate is None:
            continue
        new_costs = {i: agent_objective(candidate.paths[i], costs, fields[i]) for i in subset}
        delta = sum(new_costs.values()) - sum(per_agent[i] for i in subset)
        if delta < -1e-9:
            incumbent = candidate
            for i, c in new_costs.items():
                per_agent[i] = c
            current += delta
            if objective_trace is not None:
                objective_trace.append(current)
    return incumbent


def extract_labels(plan: WindowedPlan) -> JointAction:
    """First action of every refined path (the imitation label)."""
    if plan.window < 1:
        raise ValueError("plan window must be >= 1 to extract labels")
    return [action_between(p[0], p[1]) for p in plan.paths]
