#!/usr/bin/env python3
"""Regenerate the benchmark map fixtures under maps/.

Every map is deterministic. Layout notes:

* sortation33x57: 1x1 pillars on a 2-cell pitch, 1,564 free cells.
* warehouse33x57: 2-row shelf bands with single-width aisles; aisle rows
  and cross-aisle columns alternate parity so one-way highway costs give
  every direction a nearby encouraged lane.
* city64: scattered building blocks on an irregular street grid.
* randomNN: Bernoulli obstacles trimmed to the largest connected component.
"""

from __future__ import annotations

import sys
from collections import deque
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent


def render(blocked: np.ndarray) -> str:
    h, w = blocked.shape
    rows = ["".join("@" if blocked[r, c] else "." for c in range(w)) for r in range(h)]
    return "\n".join(["type octile", f"height {h}", f"width {w}", "map"] + rows) + "\n"


def largest_component(blocked: np.ndarray) -> np.ndarray:
    h, w = blocked.shape
    seen = np.zeros_like(blocked, dtype=bool)
    best: list[tuple[int, int]] = []
    for r in range(h):
        for c in range(w):
            if blocked[r, c] or seen[r, c]:
                continue
            comp = []
            queue = deque([(r, c)])
            seen[r, c] = True
            while queue:
                y, x = queue.popleft()
                comp.append((y, x))
                for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and not blocked[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            if len(comp) > len(best):
                best = comp
    out = np.ones_like(blocked)
    for y, x in best:
        out[y, x] = False
    return out


def assert_connected(blocked: np.ndarray) -> None:
    trimmed = largest_component(blocked)
    if not np.array_equal(trimmed, blocked):
        raise AssertionError("map is not fully connected")


def empty_map(n: int) -> np.ndarray:
    return np.zeros((n, n), dtype=bool)


def random_map(n: int, density: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    blocked = rng.random((n, n)) < density
    return largest_component(blocked)


def sortation() -> np.ndarray:
    blocked = np.zeros((33, 57), dtype=bool)
    for r in range(2, 31, 2):
        for c in range(2, 43, 2):
            blocked[r, c] = True
    # Row 16 carries two extra chute pillars; total free cells: 1,564.
    blocked[16, 44] = True
    blocked[16, 46] = True
    assert blocked.size - blocked.sum() == 1564
    return blocked


def warehouse() -> np.ndarray:
    # Long 1-wide aisles between 2-row shelf bands, walled perimeter, and
    # cross-aisles anchoring both ends of every highway segment. Aisle rows
    # (1, 4, 7, ...) and cross-aisle columns (1, 28, 55) alternate parity so
    # one-way highway costs give every direction a nearby encouraged lane;
    # anchoring the ends avoids dead-end stubs that one-way flow cannot
    # drain out of.
    blocked = np.zeros((33, 57), dtype=bool)
    blocked[0, :] = True
    blocked[32, :] = True
    blocked[:, 0] = True
    blocked[:, 56] = True
    cross_cols = (1, 28, 55)
    for r in range(2, 31):
        if (r - 1) % 3 == 0:
            continue
        for c in range(1, 56):
            if c in cross_cols:
                continue
            blocked[r, c] = True
    return blocked


def city(n: int = 64, seed: int = 21) -> np.ndarray:
    rng = np.random.default_rng(seed)
    blocked = np.zeros((n, n), dtype=bool)
    r = 1
    while r < n - 4:
        block_h = int(rng.integers(6, 10))
        c = 1
        while c < n - 4:
            block_w = int(rng.integers(6, 10))
            if rng.random() < 0.9:  # leave some blocks open as plazas
                blocked[r : min(r + block_h, n - 1), c : min(c + block_w, n - 1)] = True
            c += block_w + int(rng.integers(1, 2))
        r += block_h + int(rng.integers(1, 2))
    return largest_component(blocked)


def main() -> int:
    out_dir = ROOT / "maps"
    out_dir.mkdir(exist_ok=True)
    fixtures = {
        "empty8.map": empty_map(8),
        "random16.map": random_map(16, 0.10, seed=4),
        "random32.map": random_map(32, 0.10, seed=5),
        "random64.map": random_map(64, 0.10, seed=6),
        "sortation33x57.map": sortation(),
        "warehouse33x57.map": warehouse(),
        "city64.map": city(),
    }
    for name, blocked in fixtures.items():
        assert_connected(blocked)
        path = out_dir / name
        path.write_text(render(blocked))
        free = int(blocked.size - blocked.sum())
        print(f"{name}: {blocked.shape[0]}x{blocked.shape[1]}, {free} free")
    return 0


if __name__ == "__main__":
    sys.exit(main())
