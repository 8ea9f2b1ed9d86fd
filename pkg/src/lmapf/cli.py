"""Benchmark command line: simulate, collect, score, dump-heuristic, verify-weights.

Exit codes: 0 success, 2 usage, 3 bad input data, 4 runtime safety
violation (a solver emitted a colliding joint action).

Everything written to stdout is deterministic given the flags; per-episode
planning-time diagnostics go to stderr so repeated invocations stay
byte-identical. A ``--config`` file supplies ``key=value`` defaults that
explicit flags override. ``SILLM_THREADS`` overrides ``--jobs``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import CollisionError, LmapfError
from .grid import parse_map, parse_scenario
from .heuristics import (
    TrafficCounts,
    backward_dijkstra,
    crisscross_costs,
    dump_field,
    dynamic_guidance_field,
    plan_guide_path,
    traffic_costs,
    uniform_costs,
)
from .observe import DatasetWriter, ObservationConfig
from .policy import load_weights
from .sim import Episode, compute_score, run_episode, sample_starts
from .wlns import LnsConfig

CONFIG_KEYS = {
    "guidance.mode",
    "guidance.crisscross_profile",
    "guidance.c_vertex",
    "guidance.c_edge",
    "guidance.replan_interval",
}


class UsageError(Exception):
    pass


def _read_config(path: str) -> dict[str, str]:
    config = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line (want key=value): {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise UsageError(f"unknown config key {key!r}")
            config[key] = value
    return config


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in text.split(",")]


def _parse_cell(text: str) -> tuple[int, int]:
    row, col = text.split(",")
    return (int(row), int(col))


def _jobs(args) -> int:
    env = os.environ.get("SILLM_THREADS")
    if env:
        return max(1, int(env))
    return max(1, args.jobs)


def _build_episode(args, seed: int | None, config: dict[str, str]) -> tuple[Episode, object]:
    with open(args.map) as f:
        grid = parse_map(f.read())

    if args.scenario:
        with open(args.scenario) as f:
            scenario_seed, starts = parse_scenario(grid, f.read())
        if seed is None:
            seed = scenario_seed  # the file's seed unless --seed overrides
        if args.agents is not None and args.agents != len(starts):
            raise UsageError(f"--agents {args.agents} but scenario lists {len(starts)}")
    else:
        if seed is None:
            raise UsageError("--seed is required without --scenario")
        if args.agents is None:
            raise UsageError("--agents is required without --scenario")
        starts = sample_starts(seed, grid, args.agents)

    guidance = args.guidance or config.get("guidance.mode", "bd")
    profile = args.crisscross or config.get("guidance.crisscross_profile", "strict")
    c_vertex = float(config.get("guidance.c_vertex", 1.0))
    c_edge = float(config.get("guidance.c_edge", 2.0))
    replan_interval = config.get("guidance.replan_interval")

    weights = load_weights(args.weights) if args.weights else None
    solver = args.solver
    if solver in ("lpibt", "lpibt-wlns") and weights is None:
        raise UsageError(f"--solver {solver} requires --weights")

    lns = None
    if solver in ("wlns", "lpibt-wlns"):
        lns = LnsConfig(window=args.window, iterations=args.iters, seed=seed)

    episode = Episode(
        grid=grid,
        starts=starts,
        steps=args.steps,
        seed=seed,
        solver=solver,
        guidance=guidance,
        weights=weights,
        lns=lns,
        crisscross_profile=profile,
        c_vertex=c_vertex,
        c_edge=c_edge,
        replan_interval=int(replan_interval) if replan_interval else None,
        map_name=args.map,
    )
    return episode, grid


def _run_one(payload) -> tuple[int, dict, list[str], float, float]:
    args, seed, config = payload
    episode, _ = _build_episode(args, seed, config)
    trace: list[str] = [] if args.trace else None
    metrics = run_episode(episode, trace=trace)
    mean = sum(metrics.plan_times) / len(metrics.plan_times)
    return episode.seed, metrics.record(episode), trace or [], mean, max(metrics.plan_times)


def _cmd_simulate(args) -> int:
    config = _read_config(args.config) if args.config else {}
    seeds = _parse_seeds(args.seed) if args.seed else [None]
    if args.trace and len(seeds) > 1:
        raise UsageError("--trace requires a single seed")

    payloads = [(args, seed, config) for seed in seeds]
    jobs = _jobs(args)
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, payloads))
    else:
        results = [_run_one(p) for p in payloads]

    results.sort(key=lambda r: r[0])
    for seed, record, trace, mean, worst in results:
        print(json.dumps(record))
        print(f"# seed {seed}: plan_time_mean={mean:.6f}s plan_time_max={worst:.6f}s", file=sys.stderr)
        if args.trace:
            with open(args.trace, "w") as f:
                f.write("\n".join(trace) + "\n")
    return 0


def _cmd_collect(args) -> int:
    config = _read_config(args.config) if args.config else {}
    seeds = _parse_seeds(args.seed) if args.seed else [None]
    if len(seeds) != 1:
        raise UsageError("collect runs one seed at a time")
    args.solver = "lpibt-wlns" if args.weights else "wlns"
    episode, _ = _build_episode(args, seeds[0], config)

    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    fov = ObservationConfig(episode.weights.fov_h, episode.weights.fov_w) if episode.weights else episode.fov
    fd, tmp_path = tempfile.mkstemp(dir=out_dir, suffix=".sild.tmp")
    os.close(fd)
    try:
        writer = DatasetWriter(tmp_path, fov)
        with writer:
            run_episode(episode, dataset=writer)
        os.replace(tmp_path, args.out)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    print(writer.count)
    return 0


def _cmd_score(args) -> int:
    groups: dict[tuple[str, int], dict[str, float]] = {}
    labels = set()
    for path in args.metrics:
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                record = json.loads(line)
                label = f"{record['solver']}+{record['guidance']}"
                labels.add(label)
                key = (record["map"], record["seed"])
                groups.setdefault(key, {})[label] = record["throughput"]

    if not groups:
        raise LmapfError("no metrics records found")
    if len(labels) > 1 and not any(len(g) > 1 for g in groups.values()):
        raise LmapfError("metrics groups are disjoint; no (map, seed) overlap to compare")

    totals: dict[str, list[float]] = {}
    for group in groups.values():
        for label, score in compute_score(group).items():
            totals.setdefault(label, []).append(score)
    for label in sorted(totals):
        scores = totals[label]
        print(f"{label} {sum(scores) / len(scores):.6f}")
    return 0


def _cmd_dump_heuristic(args) -> int:
    config = _read_config(args.config) if args.config else {}
    with open(args.map) as f:
        grid = parse_map(f.read())
    goal = _parse_cell(args.goal)
    guidance = args.guidance or config.get("guidance.mode", "bd")
    if guidance == "bd":
        field = backward_dijkstra(grid, goal, uniform_costs())
    elif guidance == "sg":
        profile = args.crisscross or config.get("guidance.crisscross_profile", "strict")
        field = backward_dijkstra(grid, goal, crisscross_costs(profile))
    elif guidance == "dg":
        if not args.start:
            raise UsageError("dg dump requires --start")
        costs = traffic_costs(
            1.0,
            float(config.get("guidance.c_vertex", 1.0)),
            float(config.get("guidance.c_edge", 2.0)),
        )
        guide = plan_guide_path(grid, _parse_cell(args.start), goal,
                                TrafficCounts.empty(grid), costs)
        field = dynamic_guidance_field(grid, guide, costs)
    else:
        raise UsageError(f"unknown guidance mode {guidance!r}")
    sys.stdout.write(dump_field(field))
    return 0


def _cmd_verify_weights(args) -> int:
    weights = load_weights(args.weights)
    print(f"ok: {len(weights.tensors)} tensors, fov {weights.fov_h}x{weights.fov_w}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value defaults merged under flags")
    parser.add_argument("--jobs", type=int, default=1, help="parallel episodes for multi-seed sweeps")


def _add_episode_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--map", required=True)
    parser.add_argument("--agents", type=int)
    parser.add_argument("--steps", type=int, required=True)
    parser.add_argument("--seed", help="one seed, a,b,c list, or lo..hi range")
    parser.add_argument("--guidance", choices=("bd", "sg", "dg"))
    parser.add_argument("--crisscross", choices=("strict", "soft"))
    parser.add_argument("--weights")
    parser.add_argument("--window", type=int, default=15)
    parser.add_argument("--iters", type=int, default=5000)
    parser.add_argument("--scenario")
    parser.add_argument("--trace")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmapf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run episodes and print one metrics record per seed")
    _add_episode_flags(p)
    p.add_argument("--solver", required=True, choices=("pibt", "lpibt", "wlns", "lpibt-wlns"))
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("collect", help="record an imitation dataset from windowed refinement")
    _add_episode_flags(p)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_collect)

    p = sub.add_parser("score", help="per-solver mean score across (map, seed) groups")
    p.add_argument("--metrics", nargs="+", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("dump-heuristic", help="print a guidance field as a text grid")
    p.add_argument("--map", required=True)
    p.add_argument("--goal", required=True, help="row,col")
    p.add_argument("--start", help="row,col (dg only)")
    p.add_argument("--guidance", choices=("bd", "sg", "dg"))
    p.add_argument("--crisscross", choices=("strict", "soft"))
    _add_common(p)
    p.set_defaults(func=_cmd_dump_heuristic)

    p = sub.add_parser("verify-weights", help="validate a weight file against the architecture")
    p.add_argument("--weights", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_verify_weights)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except CollisionError as exc:
        print(f"safety violation: {exc}", file=sys.stderr)
        return 4
    except (LmapfError, FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
