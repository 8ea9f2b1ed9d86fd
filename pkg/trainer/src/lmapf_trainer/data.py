"""Dataset loading: step grouping, neighbor joins, splits and batching.

Records of one simulator step are kept together because the communication
buffer needs every visible neighbor's feature vector. Neighbor identity is
rebuilt from each record's dynamic-obstacle channel: a marked FoV cell at
offset (dr, dc) from a record at absolute (row, col) is the agent whose
record of the same step sits at (row+dr, col+dc).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .formats import FormatError, Record, read_dataset
from .model import self_placements


@dataclass
class StepGroup:
    """All records of one (file, step), join-ready."""

    o1: np.ndarray  # (k, 4, V, V) float32
    o2: np.ndarray  # (k, 3, V, V) float32
    labels: np.ndarray  # (k,) int64
    placements: np.ndarray  # (m, 4) int64: dst, src, fov_row, fov_col

    def __len__(self) -> int:
        return len(self.labels)


def _group_records(records: list[Record], fov: tuple[int, int]) -> list[StepGroup]:
    vh, vw = fov
    cr, cc = vh // 2, vw // 2
    by_step: dict[int, list[Record]] = {}
    for rec in records:
        by_step.setdefault(rec.step, []).append(rec)

    groups = []
    for step in sorted(by_step):
        recs = by_step[step]
        at = {(r.row, r.col): i for i, r in enumerate(recs)}
        if len(at) != len(recs):
            raise FormatError(f"step {step}: two records share one cell")
        rows = [self_placements(len(recs), vh, vw)]
        for i, rec in enumerate(recs):
            for r, c in np.argwhere(rec.encoder_input[1] == 1.0):
                neighbor = (rec.row + int(r) - cr, rec.col + int(c) - cc)
                j = at.get(neighbor)
                if j is None:
                    raise FormatError(
                        f"step {step}: record at {(rec.row, rec.col)} sees an agent at "
                        f"{neighbor} with no record in the same step"
                    )
                rows.append(np.array([[i, j, int(r), int(c)]], dtype=np.int64))
        groups.append(
            StepGroup(
                o1=np.stack([r.encoder_input for r in recs]),
                o2=np.stack([r.projection_input for r in recs]),
                labels=np.array([r.label for r in recs], dtype=np.int64),
                placements=np.concatenate(rows),
            )
        )
    return groups


def load_groups(paths, expected_fov: tuple[int, int] | None = None) -> tuple[tuple[int, int], list[StepGroup]]:
    """Load one or more dataset files into per-step groups."""
    fov = expected_fov
    groups: list[StepGroup] = []
    for path in paths:
        file_fov, records = read_dataset(path)
        if fov is None:
            fov = file_fov
        elif file_fov != fov:
            raise FormatError(f"{path}: field of view {file_fov} does not match {fov}")
        if records:
            groups.extend(_group_records(records, file_fov))
    if fov is None:
        raise FormatError("no dataset files given")
    if not groups:
        raise FormatError("datasets contain no records")
    return fov, groups


def split_groups(groups: list[StepGroup], validation_fraction: float, seed: int):
    """Deterministic train/validation split on whole step groups."""
    order = np.random.default_rng(seed).permutation(len(groups))
    n_val = max(1, int(round(len(groups) * validation_fraction)))
    if n_val >= len(groups):
        raise ValueError("validation split would consume every group")
    val_idx = set(order[:n_val].tolist())
    train = [groups[i] for i in range(len(groups)) if i not in val_idx]
    val = [groups[i] for i in range(len(groups)) if i in val_idx]
    return train, val


def merge_groups(groups: list[StepGroup]) -> StepGroup:
    """Concatenate groups into one batch, offsetting placement indices."""
    offset = 0
    placements = []
    for g in groups:
        p = g.placements.copy()
        p[:, 0] += offset
        p[:, 1] += offset
        placements.append(p)
        offset += len(g)
    return StepGroup(
        o1=np.concatenate([g.o1 for g in groups]),
        o2=np.concatenate([g.o2 for g in groups]),
        labels=np.concatenate([g.labels for g in groups]),
        placements=np.concatenate(placements),
    )


def batches(groups: list[StepGroup], batch_size: int, rng: np.random.Generator):
    """Yield merged batches of whole groups totalling >= batch_size records."""
    order = rng.permutation(len(groups))
    bucket: list[StepGroup] = []
    count = 0
    for i in order:
        bucket.append(groups[int(i)])
        count += len(groups[int(i)])
        if count >= batch_size:
            yield merge_groups(bucket)
            bucket, count = [], 0
    if bucket:
        yield merge_groups(bucket)
