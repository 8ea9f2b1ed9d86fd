"""Numba-compiled hot loops. Kept tiny so correctness is obvious."""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _bfs(blocked: np.ndarray, height: int, width: int, goal: int) -> np.ndarray:
    n = height * width
    dist = np.full(n, np.inf)
    queue = np.empty(n, np.int64)
    head, tail = 0, 0
    dist[goal] = 0.0
    queue[tail] = goal
    tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        r = v // width
        c = v % width
        d = dist[v] + 1.0
        if r > 0 and not blocked[v - width] and dist[v - width] == np.inf:
            dist[v - width] = d
            queue[tail] = v - width
            tail += 1
        if r < height - 1 and not blocked[v + width] and dist[v + width] == np.inf:
            dist[v + width] = d
            queue[tail] = v + width
            tail += 1
        if c > 0 and not blocked[v - 1] and dist[v - 1] == np.inf:
            dist[v - 1] = d
            queue[tail] = v - 1
            tail += 1
        if c < width - 1 and not blocked[v + 1] and dist[v + 1] == np.inf:
            dist[v + 1] = d
            queue[tail] = v + 1
            tail += 1
    return dist


def grid_bfs_distances(blocked: np.ndarray, goal_index: int) -> np.ndarray:
    """Hop counts from every cell to ``goal_index`` on the 4-neighbor grid.

    Returns a flat float64 array with +inf for unreachable or blocked cells.
    """
    height, width = blocked.shape
    return _bfs(np.ascontiguousarray(blocked.reshape(-1)), height, width, goal_index)


@numba.njit(cache=True)
def _multi_bfs(blocked: np.ndarray, height: int, width: int, sources: np.ndarray):
    n = height * width
    dist = np.full(n, np.inf)
    label = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    head, tail = 0, 0
    for k in range(len(sources)):
        s = sources[k]
        if dist[s] == np.inf:
            dist[s] = 0.0
            label[s] = k
            queue[tail] = s
            tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        r = v // width
        c = v % width
        d = dist[v] + 1.0
        lab = label[v]
        if r > 0 and not blocked[v - width] and dist[v - width] == np.inf:
            dist[v - width] = d
            label[v - width] = lab
            queue[tail] = v - width
            tail += 1
        if r < height - 1 and not blocked[v + width] and dist[v + width] == np.inf:
            dist[v + width] = d
            label[v + width] = lab
            queue[tail] = v + width
            tail += 1
        if c > 0 and not blocked[v - 1] and dist[v - 1] == np.inf:
            dist[v - 1] = d
            label[v - 1] = lab
            queue[tail] = v - 1
            tail += 1
        if c < width - 1 and not blocked[v + 1] and dist[v + 1] == np.inf:
            dist[v + 1] = d
            label[v + 1] = lab
            queue[tail] = v + 1
            tail += 1
    return dist, label


def grid_nearest_source(blocked: np.ndarray, source_indices: np.ndarray):
    """Multi-source BFS: hop count and index of the nearest source per cell.

    Ties go to the earliest source in ``source_indices`` (BFS seeding order).
    Unreachable cells get +inf distance and label -1.
    """
    height, width = blocked.shape
    return _multi_bfs(
        np.ascontiguousarray(blocked.reshape(-1)), height, width,
        np.ascontiguousarray(source_indices.astype(np.int64)),
    )
