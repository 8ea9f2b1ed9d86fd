"""Iterative self-bootstrapping: collect with the engine, train, repeat.

Iteration zero collects from plain rollouts (the engine's windowed solver
without weights); every later iteration exports the newest checkpoint and
collects with policy-guided rollouts. Datasets accumulate across
iterations; the best validation checkpoint over the whole loop is
returned. The engine is driven purely through its command line.
"""

from __future__ import annotations

import shutil
import subprocess
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

from .train import Checkpoint, TrainConfig, train


class BootstrapError(Exception):
    pass


@dataclass
class CollectSpec:
    """What each engine collection run looks like."""

    map_path: str
    agents: int = 32
    steps: int = 250
    episodes_per_iteration: int = 2
    window: int = 8
    refine_iterations: int = 80
    guidance: str = "bd"
    base_seed: int = 1000


def _run_engine(command: list[str]) -> None:
    try:
        result = subprocess.run(command, capture_output=True, text=True)
    except FileNotFoundError as exc:
        raise BootstrapError(f"engine not found: {command[0]!r}") from exc
    if result.returncode != 0:
        raise BootstrapError(
            f"engine exited with {result.returncode}: {' '.join(command)}\n{result.stderr.strip()}"
        )


def bootstrap(
    config: TrainConfig,
    engine_cmd: list[str],
    collect: CollectSpec,
    workdir: str | None = None,
    log=None,
) -> Checkpoint:
    """Run ``config.bootstrap_iterations`` collect/train rounds.

    Intermediate datasets and weight exports live in ``workdir`` (a fresh
    temporary directory when omitted, removed unless the caller supplied
    it). Nothing is left behind on failure.
    """
    own_workdir = workdir is None
    base = Path(tempfile.mkdtemp(prefix="lmapf-bootstrap-")) if own_workdir else Path(workdir)
    base.mkdir(parents=True, exist_ok=True)
    datasets = list(config.dataset_paths)
    best: Checkpoint | None = None
    weights_path: Path | None = None
    try:
        for iteration in range(config.bootstrap_iterations):
            for episode in range(collect.episodes_per_iteration):
                out = base / f"iter{iteration}_ep{episode}.sild"
                seed = collect.base_seed + iteration * collect.episodes_per_iteration + episode
                command = engine_cmd + [
                    "collect",
                    "--map", collect.map_path,
                    "--agents", str(collect.agents),
                    "--steps", str(collect.steps),
                    "--seed", str(seed),
                    "--guidance", collect.guidance,
                    "--window", str(collect.window),
                    "--iters", str(collect.refine_iterations),
                    "--out", str(out),
                ]
                if weights_path is not None:
                    command += ["--weights", str(weights_path)]
                _run_engine(command)
                datasets.append(str(out))

            checkpoint = train(
                replace(config, dataset_paths=datasets, seed=config.seed + iteration),
                iteration=iteration,
                log=log,
            )
            if log:
                log(f"iteration {iteration}: val_accuracy {checkpoint.val_accuracy:.4f} "
                    f"({len(datasets)} datasets)")
            if best is None or checkpoint.val_accuracy >= best.val_accuracy:
                best = checkpoint
            weights_path = base / f"iter{iteration}.silw"
            checkpoint.save(weights_path)
        return best
    finally:
        if own_workdir:
            shutil.rmtree(base, ignore_errors=True)
