"""Acceptance suite: one test per exit criterion, at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion. The directional-throughput and performance tests are wall-clock
bounded and run real episodes; expect the module to take several minutes.
"""

import statistics
import subprocess
import sys
import time
from collections import deque
from pathlib import Path

import numpy as np
import pytest

from lmapf.grid import Action, GridMap, apply_action, parse_map
from lmapf.heuristics import FieldCache, backward_dijkstra, move_cost, uniform_costs
from lmapf.observe import ObservationConfig, encode
from lmapf.pibt import cs_pibt_step, make_agents, pibt_step, rank_by_heuristic
from lmapf.policy import random_weights, save_weights
from lmapf.sim import Episode, run_episode, sample_starts
from lmapf.wlns import LnsConfig, objective, refine, rollout_initial, validate_plan
from .oracles import joint_actions_collision_free, joint_windowed_optimum
from .test_heuristics import random_map

MAPS = Path("maps")


def load_map(name: str) -> GridMap:
    return parse_map((MAPS / name).read_text())


def trimmed_random_grid(rng: np.random.Generator, h: int, w: int, density: float) -> GridMap:
    """Random obstacles, trimmed to the largest connected free component."""
    blocked = rng.random((h, w)) < density
    free = np.argwhere(~blocked)
    if len(free) == 0:
        return trimmed_random_grid(rng, h, w, density)
    seen = np.zeros_like(blocked)
    start = tuple(int(x) for x in free[0])
    queue = deque([start])
    seen[start] = True
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and not blocked[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                queue.append((nr, nc))
    return GridMap(h, w, ~seen)


def random_world(rng, grid, n):
    free = grid.free_cells()
    n = min(n, len(free) - 1)
    idx = rng.choice(len(free), size=n, replace=False)
    starts = [free[int(i)] for i in idx]
    goals = [free[int(i)] for i in rng.integers(len(free), size=n)]
    return starts, goals


class TestCriterion1Safety:
    """Zero vertex/edge collisions over 50 mixed 500-step episodes."""

    def test_fifty_episodes_collision_free(self):
        t0 = time.perf_counter()
        steps = 500
        weights = random_weights(0)
        lns_small = dict(window=4, iterations=10, neighborhood_size=4, selection_mode="collision")
        episodes: list[Episode] = []

        # 27 plain collision-resolution episodes across maps, guidance and seeds.
        pibt_mix = [
            ("random64.map", 150, "bd"), ("random64.map", 200, "bd"),
            ("city64.map", 150, "bd"), ("city64.map", 150, "dg"),
            ("warehouse33x57.map", 100, "sg"), ("warehouse33x57.map", 100, "bd"),
            ("sortation33x57.map", 150, "sg"), ("sortation33x57.map", 150, "bd"),
            ("random32.map", 200, "bd"), ("random32.map", 180, "sg"),
            ("random32.map", 120, "dg"), ("random64.map", 120, "dg"),
            ("empty8.map", 30, "bd"), ("random16.map", 60, "bd"),
            ("random16.map", 60, "sg"), ("random16.map", 40, "dg"),
            ("warehouse33x57.map", 150, "sg"), ("city64.map", 200, "bd"),
            ("sortation33x57.map", 100, "dg"), ("random32.map", 150, "bd"),
            ("random64.map", 150, "sg"), ("city64.map", 100, "sg"),
            ("empty8.map", 20, "dg"), ("random32.map", 200, "sg"),
            ("random16.map", 50, "bd"), ("warehouse33x57.map", 120, "bd"),
            ("random64.map", 180, "bd"),
        ]
        for seed, (map_name, agents, guidance) in enumerate(pibt_mix):
            grid = load_map(map_name)
            episodes.append(Episode(
                grid=grid, starts=sample_starts(seed, grid, agents), steps=steps,
                seed=seed, solver="pibt", guidance=guidance, map_name=map_name,
                crisscross_profile="strict" if "33x57" in map_name else "soft",
            ))

        # 12 shielded-policy episodes with random (untrained) weights.
        lpibt_mix = [
            ("random32.map", 48, "bd"), ("random32.map", 48, "sg"),
            ("random32.map", 32, "dg"), ("random16.map", 48, "bd"),
            ("random16.map", 32, "sg"), ("random16.map", 32, "dg"),
            ("city64.map", 48, "bd"), ("city64.map", 48, "dg"),
            ("warehouse33x57.map", 48, "sg"), ("sortation33x57.map", 48, "sg"),
            ("empty8.map", 24, "bd"), ("random64.map", 48, "bd"),
        ]
        for seed, (map_name, agents, guidance) in enumerate(lpibt_mix, start=100):
            grid = load_map(map_name)
            episodes.append(Episode(
                grid=grid, starts=sample_starts(seed, grid, agents), steps=steps,
                seed=seed, solver="lpibt", guidance=guidance, weights=weights,
                map_name=map_name,
                crisscross_profile="strict" if "33x57" in map_name else "soft",
            ))

        # 8 windowed-refinement episodes and 3 with policy rollouts.
        wlns_mix = [
            ("random16.map", 30, "bd"), ("random16.map", 30, "sg"),
            ("random16.map", 24, "dg"), ("random32.map", 30, "bd"),
            ("random32.map", 30, "sg"), ("random32.map", 24, "dg"),
            ("empty8.map", 16, "bd"), ("warehouse33x57.map", 30, "sg"),
        ]
        for seed, (map_name, agents, guidance) in enumerate(wlns_mix, start=200):
            grid = load_map(map_name)
            episodes.append(Episode(
                grid=grid, starts=sample_starts(seed, grid, agents), steps=steps,
                seed=seed, solver="wlns", guidance=guidance,
                lns=LnsConfig(seed=seed, **lns_small), map_name=map_name,
            ))
        lw_mix = [("random16.map", 16, "bd"), ("random16.map", 16, "dg"),
                  ("empty8.map", 12, "bd")]
        for seed, (map_name, agents, guidance) in enumerate(lw_mix, start=300):
            grid = load_map(map_name)
            episodes.append(Episode(
                grid=grid, starts=sample_starts(seed, grid, agents), steps=steps,
                seed=seed, solver="lpibt-wlns", guidance=guidance, weights=weights,
                lns=LnsConfig(seed=seed, window=3, iterations=6, neighborhood_size=4,
                              selection_mode="collision"),
                map_name=map_name,
            ))

        assert len(episodes) == 50
        total_goals = 0
        for episode in episodes:
            metrics = run_episode(episode)  # CollisionError would abort
            total_goals += metrics.goals_reached
        elapsed = time.perf_counter() - t0
        assert elapsed < 600, f"safety suite took {elapsed:.0f}s (budget 600s)"
        print(f"\nACCEPTANCE 1 (safety): PASS - 50 episodes x 500 steps, "
              f"0 collisions, {total_goals} goals, {elapsed:.0f}s")


class TestCriterion2ShieldIdentity:
    """Valid collision-free learned joint actions pass through unchanged."""

    @staticmethod
    def _sample_valid_joint(rng, grid, locs):
        index_at = {loc: i for i, loc in enumerate(locs)}
        for _ in range(30):
            chosen: list[Action] = []
            targets: dict[tuple, int] = {}
            ok = True
            for i, loc in enumerate(locs):
                candidates = list(Action)
                rng.shuffle(candidates)
                pick = None
                for a in candidates:
                    t = apply_action(loc, a)
                    if not grid.is_free(t) or t in targets:
                        continue
                    k = index_at.get(t)
                    if (k is not None and k != i and k < len(chosen)
                            and apply_action(locs[k], chosen[k]) == loc):
                        continue  # would swap with an already-chosen agent
                    pick = a
                    break
                if pick is None:
                    ok = False
                    break
                chosen.append(pick)
                targets[apply_action(loc, pick)] = i
            if ok:
                return chosen
        return None

    def test_ten_thousand_random_states(self):
        rng = np.random.default_rng(2024)
        grids = [trimmed_random_grid(rng, int(rng.integers(6, 17)), int(rng.integers(6, 17)),
                                     float(rng.uniform(0, 0.25))) for _ in range(20)]
        caches = [FieldCache(g, uniform_costs()) for g in grids]
        states = 0
        t0 = time.perf_counter()
        while states < 10_000:
            gi = int(rng.integers(len(grids)))
            grid, cache = grids[gi], caches[gi]
            free = grid.free_cells()
            if len(free) < 3:
                continue
            n = int(rng.integers(2, min(11, len(free))))
            idx = rng.choice(len(free), size=n, replace=False)
            locs = [free[int(i)] for i in idx]
            goals = [free[int(i)] for i in rng.integers(len(free), size=n)]
            learned = self._sample_valid_joint(rng, grid, locs)
            if learned is None:
                continue
            agents = make_agents(locs, goals)
            for a in agents:
                a.guidance = cache.get(a.goal)
            out = cs_pibt_step(agents, grid, learned, rng)
            assert out == learned, (
                f"shield changed a collision-free joint action: {learned} -> {out}"
            )
            states += 1
        print(f"\nACCEPTANCE 2 (shield identity): PASS - {states} states, "
              f"100% unchanged, {time.perf_counter() - t0:.0f}s")


class TestCriterion3PibtOracle:
    """Joint actions always lie in the brute-force collision-free set."""

    def test_all_two_agent_placements_on_twenty_maps(self):
        rng = np.random.default_rng(7)
        grids = []
        while len(grids) < 20:
            g = trimmed_random_grid(rng, int(rng.integers(3, 5)), int(rng.integers(3, 5)),
                                    float(rng.uniform(0, 0.3)))
            if g.free_count >= 3:
                grids.append(g)
        checked = 0
        t0 = time.perf_counter()
        for grid in grids:
            free = grid.free_cells()
            cache = FieldCache(grid, uniform_costs())
            for u in free:
                for v in free:
                    if u == v:
                        continue
                    oracle = set(joint_actions_collision_free(grid, [u, v]))
                    for draw in range(2):
                        goals = [free[int(i)] for i in rng.integers(len(free), size=2)]
                        agents = make_agents([u, v], goals)
                        for a in agents:
                            a.guidance = cache.get(a.goal)
                        prefs = [rank_by_heuristic(a, grid, rng) for a in agents]
                        actions = tuple(pibt_step(agents, grid, prefs))
                        assert actions in oracle, (
                            f"pibt produced {actions} outside the collision-free set "
                            f"for starts {u},{v} goals {goals}"
                        )
                        checked += 1
        print(f"\nACCEPTANCE 3 (pibt oracle): PASS - {checked} configurations on "
              f"20 maps, 100% membership, {time.perf_counter() - t0:.0f}s")


class TestCriterion4LnsOptimality:
    """Random-neighborhood refinement reaches the joint optimum at tiny scale."""

    def test_hundred_seeded_instances(self):
        window, iterations = 4, 200
        hits, worst_gap = 0, 0.0
        t0 = time.perf_counter()
        for seed in range(100):
            rng = np.random.default_rng(seed)
            grid = trimmed_random_grid(rng, 4, 4, float(rng.uniform(0, 0.25)))
            while grid.free_count < 4:
                grid = trimmed_random_grid(rng, 4, 4, float(rng.uniform(0, 0.25)))
            free = grid.free_cells()
            idx = rng.choice(len(free), size=2, replace=False)
            starts = [free[int(i)] for i in idx]
            goals = [free[int(i)] for i in rng.integers(len(free), size=2)]
            agents = make_agents(starts, goals)
            for a in agents:
                a.guidance = backward_dijkstra(grid, a.goal, uniform_costs())
            fields = [a.guidance for a in agents]
            cfg = LnsConfig(window=window, iterations=iterations, neighborhood_size=2,
                            selection_mode="random", seed=seed)
            plan = rollout_initial(agents, grid, None, cfg)
            trace: list[float] = []
            refined = refine(plan, agents, grid, uniform_costs(), fields, cfg,
                             objective_trace=trace)
            validate_plan(refined, grid, agents)
            got = objective(refined, uniform_costs(), fields)
            optimum = joint_windowed_optimum(
                grid, starts, window,
                lambda a, b: move_cost(uniform_costs(), a, b),
                [lambda v, f=f: float(f.values[v[0], v[1]]) for f in fields],
            )
            assert all(b < a for a, b in zip(trace, trace[1:])), "objective increased"
            gap = got - optimum
            assert gap <= 2 + 1e-9, f"seed {seed}: gap {gap} exceeds optimum+2"
            worst_gap = max(worst_gap, gap)
            if gap <= 1e-9:
                hits += 1
        assert hits >= 95, f"only {hits}/100 instances reached the optimum"
        print(f"\nACCEPTANCE 4 (windowed-refinement optimality): PASS - {hits}/100 optimal, "
              f"worst gap {worst_gap:.1f}, {time.perf_counter() - t0:.0f}s")


class TestCriterion5GuidanceDirectionality:
    """Highway costs on warehouse and traffic-aware guidance on city maps."""

    @staticmethod
    def _mean_throughput(map_name, agents, guidance, seeds, steps=500, profile="strict"):
        grid = load_map(map_name)
        values = []
        for seed in seeds:
            ep = Episode(grid=grid, starts=sample_starts(seed, grid, agents), steps=steps,
                         seed=seed, solver="pibt", guidance=guidance,
                         crisscross_profile=profile, map_name=map_name)
            values.append(run_episode(ep).throughput)
        return statistics.mean(values)

    def test_static_guidance_on_warehouse(self):
        t0 = time.perf_counter()
        seeds = range(8)
        bd = self._mean_throughput("warehouse33x57.map", 100, "bd", seeds)
        sg = self._mean_throughput("warehouse33x57.map", 100, "sg", seeds)
        elapsed = time.perf_counter() - t0
        assert sg >= 1.3 * bd, f"sg {sg:.3f} < 1.3 x bd {bd:.3f}"
        print(f"\nACCEPTANCE 5a (warehouse highways): PASS - bd {bd:.2f} vs sg {sg:.2f} "
              f"({sg / bd:.2f}x >= 1.3x), {elapsed:.0f}s")

    def test_dynamic_guidance_on_city(self):
        t0 = time.perf_counter()
        seeds = range(8)
        bd = self._mean_throughput("city64.map", 150, "bd", seeds)
        dg = self._mean_throughput("city64.map", 150, "dg", seeds)
        elapsed = time.perf_counter() - t0
        assert dg >= 1.05 * bd, f"dg {dg:.3f} < 1.05 x bd {bd:.3f}"
        print(f"\nACCEPTANCE 5b (city traffic guidance): PASS - bd {bd:.2f} vs dg {dg:.2f} "
              f"({dg / bd:.2f}x >= 1.05x), {elapsed:.0f}s")


class TestCriterion6EncodingExactness:
    """Observation heuristic channels equal the formulas, error exactly 0."""

    def test_thousand_random_fixtures(self):
        rng = np.random.default_rng(99)
        t0 = time.perf_counter()
        for _ in range(1000):
            grid = random_map(rng, int(rng.integers(5, 13)), int(rng.integers(5, 13)),
                              density=float(rng.uniform(0, 0.35)))
            free = grid.free_cells()
            goal = free[int(rng.integers(len(free)))]
            loc = free[int(rng.integers(len(free)))]
            v = int(rng.choice([5, 7, 11]))
            cfg = ObservationConfig(v, v)
            field = backward_dijkstra(grid, goal, uniform_costs())
            agents = make_agents([loc], [goal])
            agents[0].guidance = field
            obs = encode(agents[0], agents, grid, field, cfg)

            cr = cc = v // 2
            h_center = field.values[loc[0], loc[1]]
            for r in range(v):
                for c in range(v):
                    cell = (loc[0] + r - cr, loc[1] + c - cc)
                    if not grid.is_free(cell) or not np.isfinite(field.values[cell]):
                        want_abs, want_rel = np.float32(1.0), np.float32(0.0)
                    else:
                        h = field.values[cell]
                        want_abs = np.float32(h / (grid.height + grid.width))
                        if np.isfinite(h_center):
                            want_rel = np.float32((h - h_center) / (v + v))
                        else:
                            want_rel = np.float32(0.0)
                    assert obs.encoder_input[2, r, c] == want_abs
                    assert obs.encoder_input[3, r, c] == want_rel
        print(f"\nACCEPTANCE 6 (encoding exactness): PASS - 1000 fixtures, "
              f"max-abs error 0, {time.perf_counter() - t0:.0f}s")


@pytest.fixture(scope="module")
def big_world():
    grid = trimmed_random_grid(np.random.default_rng(0), 256, 256, 0.10)
    starts = sample_starts(3, grid, 1000)
    return grid, starts


class TestCriterion7PerformanceFloor:
    """Median step times at 1,000 agents on a 256x256 map."""

    def test_pibt_step_under_50ms(self, big_world):
        grid, starts = big_world
        ep = Episode(grid=grid, starts=starts, steps=30, seed=3, solver="pibt",
                     guidance="bd", map_name="random256")
        metrics = run_episode(ep)
        median = statistics.median(metrics.plan_times)
        assert median < 0.050, f"median pibt step {median * 1000:.1f}ms >= 50ms"
        print(f"\nACCEPTANCE 7a (pibt step): PASS - median {median * 1000:.1f}ms < 50ms")

    def test_policy_step_under_250ms(self, big_world):
        grid, starts = big_world
        ep = Episode(grid=grid, starts=starts, steps=12, seed=3, solver="lpibt",
                     guidance="bd", weights=random_weights(0), map_name="random256")
        metrics = run_episode(ep)
        median = statistics.median(metrics.plan_times)
        assert median < 0.250, f"median lpibt step {median * 1000:.1f}ms >= 250ms"
        print(f"\nACCEPTANCE 7b (policy step): PASS - median {median * 1000:.1f}ms < 250ms")


class TestCriterion8Determinism:
    """Identical CLI invocations produce byte-identical metrics and traces."""

    def _run(self, argv):
        return subprocess.run([sys.executable, "-m", "lmapf"] + argv,
                              capture_output=True, text=True)

    def test_cli_byte_identical(self, tmp_path):
        weights_path = tmp_path / "w.silw"
        save_weights(random_weights(5), weights_path)
        invocations = [
            ["simulate", "--map", "maps/random16.map", "--agents", "20", "--steps", "50",
             "--seed", "4", "--solver", "pibt", "--guidance", "dg"],
            ["simulate", "--map", "maps/random16.map", "--agents", "16", "--steps", "30",
             "--seed", "9", "--solver", "lpibt", "--guidance", "bd",
             "--weights", str(weights_path)],
            ["simulate", "--map", "maps/empty8.map", "--agents", "6", "--steps", "40",
             "--seed", "2", "--solver", "wlns", "--guidance", "bd",
             "--window", "3", "--iters", "10"],
        ]
        for argv in invocations:
            outputs, traces = [], []
            for run in range(2):
                trace_path = tmp_path / f"t{run}.trace"
                result = self._run(argv + ["--trace", str(trace_path)])
                assert result.returncode == 0, result.stderr
                outputs.append(result.stdout)
                traces.append(trace_path.read_bytes())
            assert outputs[0] == outputs[1], f"stdout differs for {argv}"
            assert traces[0] == traces[1], f"trace differs for {argv}"
        print("\nACCEPTANCE 8 (determinism): PASS - 3 invocations byte-identical")
