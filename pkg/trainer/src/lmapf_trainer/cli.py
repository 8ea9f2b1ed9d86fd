"""Trainer command line: train on datasets or run the bootstrap loop."""

from __future__ import annotations

import argparse
import sys

from .bootstrap import BootstrapError, CollectSpec, bootstrap
from .formats import FormatError
from .train import TrainConfig, train


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _cmd_train(args) -> int:
    config = TrainConfig(
        dataset_paths=args.data,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        validation_fraction=args.val_fraction,
        seed=args.seed,
    )
    checkpoint = train(config, log=_log)
    checkpoint.save(args.out)
    print(f"{args.out} val_accuracy {checkpoint.val_accuracy:.4f}")
    return 0


def _cmd_bootstrap(args) -> int:
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        validation_fraction=args.val_fraction,
        bootstrap_iterations=args.iterations,
        seed=args.seed,
    )
    collect = CollectSpec(
        map_path=args.map,
        agents=args.agents,
        steps=args.steps,
        episodes_per_iteration=args.episodes,
        window=args.window,
        refine_iterations=args.refine_iters,
        guidance=args.guidance,
        base_seed=args.collect_seed,
    )
    checkpoint = bootstrap(config, args.engine.split(), collect,
                           workdir=args.workdir, log=_log)
    checkpoint.save(args.out)
    print(f"{args.out} iteration {checkpoint.iteration} "
          f"val_accuracy {checkpoint.val_accuracy:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmapf-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on existing dataset files")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("bootstrap", help="iterative collect/train via the engine CLI")
    p.add_argument("--engine", default=f"{sys.executable} -m lmapf")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--agents", type=int, default=32)
    p.add_argument("--steps", type=int, default=250)
    p.add_argument("--episodes", type=int, default=2)
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--refine-iters", type=int, default=80)
    p.add_argument("--guidance", default="bd")
    p.add_argument("--collect-seed", type=int, default=1000)
    p.add_argument("--iterations", type=int, default=12)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workdir")
    p.set_defaults(func=_cmd_bootstrap)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, BootstrapError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
