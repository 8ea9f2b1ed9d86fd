"""Single-step collision resolution with priority inheritance and backtracking.

``pibt_step`` resolves one timestep: agents are processed in descending
priority; each takes its best-ranked action that does not conflict with
already-committed higher-priority agents. When a preferred move targets a
cell occupied by an undecided lower-priority agent, that agent plans first
(priority inheritance); if it cannot clear the cell, the caller falls back
to its next-ranked action. Waiting in one's own cell always succeeds absent
a higher-priority claim, so the procedure terminates with a collision-free
joint action.

``cs_pibt_step`` is the shielded variant used with a learned policy: each
agent's preference list starts with the externally supplied action, so a
collision-free learned joint action passes through unchanged.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .grid import Action, GridMap, Location, apply_action
from .heuristics import GuidanceField

ActionPreference = list[Action]
JointAction = list[Action]

_UNDECIDED = -2
_EMPTY = -1


@dataclass
class AgentState:
    """One agent: where it is, where it is headed, and when it plans.

    Priorities must be unique across agents; ``time since last arrival
    plus id/n`` guarantees that (see :func:`update_priorities`).
    """

    id: int
    location: Location
    goal: Location
    priority: float
    guidance: GuidanceField | None = None
    epsilon: float = dataclass_field(default=0.0)

    def clone(self) -> "AgentState":
        return AgentState(self.id, self.location, self.goal, self.priority,
                          self.guidance, self.epsilon)


def make_agents(starts: list[Location], goals: list[Location]) -> list[AgentState]:
    n = len(starts)
    return [
        AgentState(i, starts[i], goals[i], priority=i / n, epsilon=i / n)
        for i in range(n)
    ]


def rank_by_heuristic(agent: AgentState, grid: GridMap, rng: np.random.Generator) -> ActionPreference:
    """All five actions sorted by the guidance value of their target cell.

    Invalid moves (off-map or into walls) rank last; ties are broken by a
    seeded shuffle so equally good moves vary per episode but stay
    deterministic per seed.
    """
    values = agent.guidance.values
    jitter = rng.random(5)
    keyed = []
    for a in Action:
        t = apply_action(agent.location, a)
        if grid.is_free(t):
            keyed.append((0, float(values[t[0], t[1]]), jitter[a], a))
        else:
            keyed.append((1, 0.0, jitter[a], a))
    keyed.sort()
    return [a for *_, a in keyed]


def pibt_step(agents: list[AgentState], grid: GridMap, prefs: list[ActionPreference]) -> JointAction:
    """One collision-free joint action honoring the given preference lists.

    Does not mutate agent states; callers apply the returned actions.
    """
    n = len(agents)
    width = grid.width
    cells = [a.location[0] * width + a.location[1] for a in agents]
    occupied_now = np.full(grid.height * width, _EMPTY, dtype=np.int64)
    occupied_next = np.full(grid.height * width, _EMPTY, dtype=np.int64)
    for i, c in enumerate(cells):
        occupied_now[c] = i
    decided_cell = [_UNDECIDED] * n
    decided_action: JointAction = [Action.WAIT] * n

    # Candidate target cells per (agent, preference slot); -1 marks invalid.
    target_cells = []
    for i, agent in enumerate(agents):
        row = []
        for a in prefs[i]:
            t = apply_action(agent.location, a)
            row.append(t[0] * width + t[1] if grid.is_free(t) else -1)
        target_cells.append(row)

    def plan(i: int) -> bool:
        for a, cell in zip(prefs[i], target_cells[i]):
            if cell < 0 or occupied_next[cell] != _EMPTY:
                continue
            j = int(occupied_now[cell])
            if j != _EMPTY and j != i and decided_cell[j] == cells[i]:
                continue  # the occupant is moving into my cell: swap
            decided_cell[i] = cell
            decided_action[i] = a
            occupied_next[cell] = i
            if j != _EMPTY and j != i and decided_cell[j] == _UNDECIDED and not plan(j):
                continue  # occupant is stuck; try my next action
            return True
        # Nothing worked: claim my own cell (always succeeds, possibly
        # overwriting a pending reservation by the agent that pushed me).
        decided_cell[i] = cells[i]
        decided_action[i] = Action.WAIT
        occupied_next[cells[i]] = i
        return False

    order = sorted(range(n), key=lambda i: agents[i].priority, reverse=True)
    limit = 3 * n + 100
    if sys.getrecursionlimit() < limit:
        sys.setrecursionlimit(limit)
    for i in order:
        if decided_cell[i] == _UNDECIDED:
            plan(i)
    return decided_action


def cs_pibt_step(
    agents: list[AgentState],
    grid: GridMap,
    learned: JointAction,
    rng: np.random.Generator,
) -> JointAction:
    """Shield a learned joint action: keep it where collision-free.

    Each agent prefers its learned action first, then the remaining four in
    heuristic order. A learned move into a wall or off the map is demoted
    below the valid heuristic-ranked actions instead of erroring.
    """
    prefs = []
    for agent, a in zip(agents, learned):
        ranking = rank_by_heuristic(agent, grid, rng)
        if grid.is_free(apply_action(agent.location, a)):
            ranking.remove(a)
            ranking.insert(0, a)
        prefs.append(ranking)
    return pibt_step(agents, grid, prefs)


def update_priorities(agents: list[AgentState], arrivals: set[int]) -> None:
    """Reset arrived agents to their epsilon; everyone else ages by 1."""
    for agent in agents:
        if agent.id in arrivals:
            agent.priority = agent.epsilon
        else:
            agent.priority += 1.0


def joint_targets(agents: list[AgentState], actions: JointAction) -> list[Location]:
    return [apply_action(a.location, act) for a, act in zip(agents, actions)]
