"""The lifelong execution loop.

Each step: refresh guidance for agents with new goals, encode observations
when a policy or a dataset recorder is active, produce a joint action with
the configured solver, validate it is collision-free (a violation aborts
the episode; it is never tolerated), apply it, resample goals of agents
that arrived, and age priorities.

Goal streams are per-agent substreams of the episode seed, so the i-th
draw for agent a depends only on (seed, a, i) and solvers face comparable
task sequences on one scenario. New goals drawn at the end of an arrival
step become visible to planning from the next step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import accel
from .errors import CollisionError
from .grid import ACTION_LETTERS, Action, GridMap, Location, apply_action
from .heuristics import (
    FieldCache,
    TrafficCounts,
    crisscross_costs,
    dynamic_guidance_field,
    plan_guide_path,
    traffic_costs,
    uniform_costs,
    update_traffic,
)
from .observe import BatchEncoder, DatasetRecord, DatasetWriter, ObservationConfig
from .pibt import AgentState, cs_pibt_step, make_agents, pibt_step, rank_by_heuristic, update_priorities
from .policy import PolicyWeights
from .wlns import LnsConfig, extract_labels, refine, rollout_initial

SOLVERS = ("pibt", "lpibt", "wlns", "lpibt-wlns")
GUIDANCE_MODES = ("bd", "sg", "dg")

# Stream tags keeping the episode's random substreams independent.
_GOAL_STREAM = 0x60A1
_START_STREAM = 0x57A7
_TIE_STREAM = 0x71E5
_LNS_STREAM = 0x1A55


def goal_stream(seed: int, agent_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(_GOAL_STREAM, agent_id)))


def _stream(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tag,)))


class _GoalSampler:
    """Uniform draws over free cells with one excluded, O(1) per draw."""

    def __init__(self, grid: GridMap):
        self.free = grid.free_cells()
        self.index = {v: i for i, v in enumerate(self.free)}
        if len(self.free) < 2:
            raise ValueError("need at least 2 free cells to assign goals")

    def draw(self, rng: np.random.Generator, current: Location) -> Location:
        k = int(rng.integers(len(self.free) - 1))
        skip = self.index.get(current, len(self.free))
        return self.free[k if k < skip else k + 1]


def assign_goal(rng: np.random.Generator, grid: GridMap, current: Location) -> Location:
    """Uniform draw over free cells excluding ``current``."""
    return _GoalSampler(grid).draw(rng, current)


def sample_starts(seed: int, grid: GridMap, n: int) -> list[Location]:
    free = grid.free_cells()
    if n > len(free):
        raise ValueError(f"{n} agents but only {len(free)} free cells")
    rng = _stream(seed, _START_STREAM)
    idx = rng.choice(len(free), size=n, replace=False)
    return [free[int(i)] for i in idx]


@dataclass
class Episode:
    grid: GridMap
    starts: list[Location]
    steps: int
    seed: int
    solver: str = "pibt"
    guidance: str = "bd"
    weights: PolicyWeights | None = None
    lns: LnsConfig | None = None
    crisscross_profile: str = "strict"
    c_vertex: float = 1.0
    c_edge: float = 2.0
    replan_interval: int | None = None
    fov: ObservationConfig = dataclass_field(default_factory=ObservationConfig)
    map_name: str = "map"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.guidance not in GUIDANCE_MODES:
            raise ValueError(f"unknown guidance mode {self.guidance!r}")
        if len(set(self.starts)) != len(self.starts):
            raise ValueError("start cells must be distinct")
        if self.solver in ("lpibt", "lpibt-wlns") and self.weights is None:
            raise ValueError(f"solver {self.solver} needs policy weights")
        if self.solver in ("wlns", "lpibt-wlns") and self.lns is None:
            self.lns = LnsConfig()


@dataclass
class Metrics:
    goals_reached: int
    steps: int
    throughput: float
    plan_times: list[float]

    def record(self, episode: Episode) -> dict:
        """Deterministic single-line record; timing stays out (see CLI)."""
        return {
            "map": episode.map_name,
            "solver": episode.solver,
            "guidance": episode.guidance,
            "seed": episode.seed,
            "steps": episode.steps,
            "goals_reached": self.goals_reached,
            "throughput": self.throughput,
        }


class GuidanceManager:
    """Keeps every agent's guidance field current for one episode."""

    def __init__(self, grid: GridMap, mode: str, crisscross_profile: str = "strict",
                 c_vertex: float = 1.0, c_edge: float = 2.0,
                 cache_capacity: int = 4096, replan_interval: int | None = None):
        self.grid = grid
        self.mode = mode
        self.replan_interval = replan_interval
        if mode == "bd":
            self.costs = uniform_costs()
        elif mode == "sg":
            self.costs = crisscross_costs(crisscross_profile)
        elif mode == "dg":
            self.costs = traffic_costs(1.0, c_vertex, c_edge)
        else:
            raise ValueError(f"unknown guidance mode {mode!r}")
        # The cost model pricing windowed objectives; the heuristics and the
        # objective must agree, and congestion penalties never price steps.
        self.objective_costs = self.costs if mode == "sg" else uniform_costs(self.costs.base_cost)
        self._cache = FieldCache(grid, self.costs, cache_capacity) if mode != "dg" else None
        self._traffic = TrafficCounts.empty(grid) if mode == "dg" else None
        self._guide_paths: dict[int, object] = {}

    def refresh(self, agents: list[AgentState], changed: set[int], step: int) -> None:
        if self.mode == "dg" and self.replan_interval and step % self.replan_interval == 0:
            changed = set(range(len(agents)))
        for i in sorted(changed):
            agent = agents[i]
            if self._cache is not None:
                agent.guidance = self._cache.get(agent.goal)
                continue
            old = self._guide_paths.pop(agent.id, None)
            if old is not None:
                update_traffic(self._traffic, old, None)
            guide = plan_guide_path(self.grid, agent.location, agent.goal,
                                    self._traffic, self.costs, agent_id=agent.id)
            update_traffic(self._traffic, None, guide)
            self._guide_paths[agent.id] = guide
            agent.guidance = dynamic_guidance_field(self.grid, guide, self.costs)


class PolicyRunner:
    """Encodes observations and runs the policy; shared by solver and recorder."""

    def __init__(self, weights: PolicyWeights, forward_fn=None):
        self.weights = weights
        self.cfg = ObservationConfig(weights.fov_h, weights.fov_w)
        self.forward_fn = forward_fn or accel.batched_forward
        self._encoders: dict[int, BatchEncoder] = {}

    def observations(self, agents, grid):
        encoder = self._encoders.get(id(grid))
        if encoder is None:
            encoder = self._encoders[id(grid)] = BatchEncoder(grid, self.cfg)
        return encoder.encode_all(agents, [a.guidance for a in agents])

    def learned_actions(self, agents, grid, observations=None) -> list[Action]:
        obs = observations if observations is not None else self.observations(agents, grid)
        probs = self.forward_fn(obs, self.weights)
        return [Action(int(i)) for i in probs.argmax(axis=1)]


def validate_joint_action(agents: list[AgentState], targets: list[Location], grid: GridMap) -> None:
    """Abort on a vertex or edge collision, or an invalid target cell."""
    seen: dict[Location, int] = {}
    origin: dict[Location, int] = {a.location: a.id for a in agents}
    for agent, t in zip(agents, targets):
        if not grid.is_free(t):
            raise CollisionError(f"agent {agent.id} moved into blocked cell {t}")
        if t in seen:
            raise CollisionError(f"vertex collision at {t}: agents {seen[t]} and {agent.id}")
        seen[t] = agent.id
    for agent, t in zip(agents, targets):
        if t == agent.location:
            continue
        j = origin.get(t)
        if j is not None and j != agent.id and targets[j] == agent.location:
            raise CollisionError(f"edge collision between agents {agent.id} and {j}")


def run_episode(
    episode: Episode,
    dataset: DatasetWriter | None = None,
    trace: list[str] | None = None,
) -> Metrics:
    grid = episode.grid
    n = len(episode.starts)
    sampler = _GoalSampler(grid)

    goal_rngs = [goal_stream(episode.seed, i) for i in range(n)]
    tie_rng = _stream(episode.seed, _TIE_STREAM)
    lns_rng = _stream(episode.seed, _LNS_STREAM)

    goals = [sampler.draw(goal_rngs[i], episode.starts[i]) for i in range(n)]
    agents = make_agents(episode.starts, goals)

    manager = GuidanceManager(
        grid, episode.guidance, episode.crisscross_profile,
        episode.c_vertex, episode.c_edge, replan_interval=episode.replan_interval,
    )
    runner = PolicyRunner(episode.weights) if episode.weights is not None else None
    collecting = dataset is not None
    # Iteration zero of bootstrapping collects from plain rollouts, so
    # observations may be needed even without a policy.
    obs_cfg = runner.cfg if runner is not None else episode.fov
    batch_encoder = BatchEncoder(grid, obs_cfg) if (runner is not None or collecting) else None
    changed = set(range(n))

    goals_reached = 0
    plan_times: list[float] = []
    for step in range(episode.steps):
        t0 = time.perf_counter()
        manager.refresh(agents, changed, step)
        changed = set()

        observations = None
        if batch_encoder is not None:
            observations = batch_encoder.encode_all(agents, [a.guidance for a in agents])

        if episode.solver == "pibt":
            prefs = [rank_by_heuristic(a, grid, tie_rng) for a in agents]
            actions = pibt_step(agents, grid, prefs)
        elif episode.solver == "lpibt":
            learned = runner.learned_actions(agents, grid, observations)
            actions = cs_pibt_step(agents, grid, learned, tie_rng)
        else:  # windowed refinement, with or without a policy for rollouts
            cfg = episode.lns
            plan = rollout_initial(agents, grid, runner, cfg, rng=lns_rng, start_step=step)
            fields = [a.guidance for a in agents]
            plan = refine(plan, agents, grid, manager.objective_costs, fields, cfg, rng=lns_rng)
            actions = extract_labels(plan)

        targets = [apply_action(a.location, act) for a, act in zip(agents, actions)]
        validate_joint_action(agents, targets, grid)
        plan_times.append(time.perf_counter() - t0)

        if trace is not None:
            trace.append(f"{step};" + ",".join(f"{a.id}:{ACTION_LETTERS[act]}"
                                               for a, act in zip(agents, actions)))
        if collecting:
            dataset.write([
                DatasetRecord(observation=obs, label=act, agent_id=a.id, step=step,
                              location=a.location)
                for a, obs, act in zip(agents, observations, actions)
            ])

        arrivals = set()
        for agent, target in zip(agents, targets):
            agent.location = target
            if agent.location == agent.goal:
                arrivals.add(agent.id)
        goals_reached += len(arrivals)
        for i in arrivals:
            agents[i].goal = sampler.draw(goal_rngs[i], agents[i].location)
            changed.add(i)
        update_priorities(agents, arrivals)

    return Metrics(
        goals_reached=goals_reached,
        steps=episode.steps,
        throughput=goals_reached / episode.steps,
        plan_times=plan_times,
    )


def compute_score(throughputs: dict[str, float]) -> dict[str, float]:
    """Each solver's throughput divided by the best throughput."""
    if not throughputs:
        raise ValueError("no throughputs to score")
    if any(v < 0 for v in throughputs.values()):
        raise ValueError("throughput cannot be negative")
    best = max(throughputs.values())
    if best <= 0:
        raise ValueError("all throughputs are zero; scores undefined")
    return {k: v / best for k, v in throughputs.items()}
