"""Supervised imitation training on recorded action-observation pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .data import StepGroup, batches, load_groups, merge_groups, split_groups
from .formats import write_weights
from .model import PolicyNet, export_tensors, load_tensors


@dataclass
class TrainConfig:
    dataset_paths: list[str] = field(default_factory=list)
    epochs: int = 10
    batch_size: int = 256
    learning_rate: float = 1e-3
    validation_fraction: float = 0.1
    bootstrap_iterations: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("hyperparameters must be positive (epochs may be zero)")
        if not 0 < self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must lie in (0, 0.5]")
        if self.bootstrap_iterations < 1:
            raise ValueError("bootstrap_iterations must be >= 1")


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    val_accuracy: float
    iteration: int = 0
    fov: tuple[int, int] = (11, 11)

    def save(self, path) -> None:
        write_weights(path, self.tensors, self.fov)


def _tensors_of(group: StepGroup):
    return (
        torch.from_numpy(group.o1),
        torch.from_numpy(group.o2),
        torch.from_numpy(group.placements),
        torch.from_numpy(group.labels),
    )


def evaluate(net: PolicyNet, groups: list[StepGroup]) -> float:
    """Label accuracy over whole groups."""
    correct = total = 0
    with torch.no_grad():
        for group in groups:
            o1, o2, placements, labels = _tensors_of(group)
            predictions = net(o1, o2, placements).argmax(dim=1)
            correct += int((predictions == labels).sum())
            total += len(labels)
    return correct / total if total else 0.0


def train(config: TrainConfig, iteration: int = 0, log=None) -> Checkpoint:
    """Cross-entropy imitation; returns the epoch checkpoint with best
    held-out accuracy. Deterministic for a fixed config."""
    fov, groups = load_groups(config.dataset_paths)
    train_groups, val_groups = split_groups(groups, config.validation_fraction, config.seed)

    torch.manual_seed(config.seed)
    net = PolicyNet(*fov)
    optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    loss_fn = torch.nn.CrossEntropyLoss()
    rng = np.random.default_rng(config.seed)

    best = Checkpoint(export_tensors(net), evaluate(net, val_groups), iteration, fov)
    if log:
        log(f"epoch 0 val_accuracy {best.val_accuracy:.4f}")
    for epoch in range(1, config.epochs + 1):
        net.train()
        epoch_loss, seen = 0.0, 0
        for batch in batches(train_groups, config.batch_size, rng):
            o1, o2, placements, labels = _tensors_of(batch)
            optimizer.zero_grad()
            loss = loss_fn(net(o1, o2, placements), labels)
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach()) * len(labels)
            seen += len(labels)
        net.eval()
        accuracy = evaluate(net, val_groups)
        if log:
            log(f"epoch {epoch} loss {epoch_loss / seen:.4f} val_accuracy {accuracy:.4f}")
        # Ties go to the later epoch: with a small validation split the
        # accuracy ceiling is reached early while training still improves.
        if accuracy >= best.val_accuracy:
            best = Checkpoint(export_tensors(net), accuracy, iteration, fov)
    return best


def training_accuracy(checkpoint: Checkpoint, dataset_paths) -> float:
    """Accuracy of a checkpoint over entire datasets (sanity checks)."""
    fov, groups = load_groups(dataset_paths, expected_fov=checkpoint.fov)
    net = load_tensors(PolicyNet(*fov), checkpoint.tensors)
    net.eval()
    return evaluate(net, [merge_groups(groups)])
