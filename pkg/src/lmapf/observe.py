"""Per-agent field-of-view observations and the imitation dataset format.

An observation is two overlapping channel groups around the agent:

* ``encoder_input`` (4 x V_h x V_w): static obstacles, dynamic obstacles
  (other agents), absolute guidance values scaled by map size, and
  guidance values relative to the center cell scaled by FoV size.
* ``projection_input`` (3 x V_h x V_w): static obstacles, dynamic
  obstacles, and a one-hot goal indicator (all zero when the goal lies
  outside the FoV).

Blocked, out-of-map and unreachable cells read 1.0 in the absolute channel
and 0.0 in the relative channel; out-of-map padding counts as a static
obstacle.

Datasets are flat binary files (magic ``SILD``): a 10-byte header
{magic, version u16, V_h u16, V_w u16} followed by fixed-stride records
{step u32, agent_id u32, row u16, col u16, label u8, encoder block
4*V_h*V_w f32, projection block 3*V_h*V_w f32}, all little-endian. The
fixed stride supports random access; a truncated tail record is detected
and skipped on read. The agent's absolute (row, col) lets a consumer
rebuild neighbor joins across records of one step from the dynamic
obstacle channel.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DatasetFormatError
from .grid import Action, GridMap, Location
from .heuristics import GuidanceField




DATASET_MAGIC = b"SILD"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sHHH")
_RECORD_FIXED = struct.Struct("<IIHHB")


@dataclass(frozen=True)
class ObservationConfig:
    """Field-of-view dimensions; both must be odd (agent-centered)."""

    fov_h: int = 11
    fov_w: int = 11

    def __post_init__(self):
        if self.fov_h % 2 == 0 or self.fov_w % 2 == 0 or self.fov_h < 1 or self.fov_w < 1:
            raise ValueError("field of view dimensions must be odd and positive")

    @property
    def center(self) -> tuple[int, int]:
        return (self.fov_h // 2, self.fov_w // 2)


@dataclass
class Observation:
    encoder_input: np.ndarray  # (4, fov_h, fov_w) float32
    projection_input: np.ndarray  # (3, fov_h, fov_w) float32
    neighbor_offsets: list[tuple[int, int, int]]  # (agent_id, d_row, d_col)


@dataclass
class DatasetRecord:
    observation: Observation
    label: Action
    agent_id: int
    step: int
    location: Location = (0, 0)


def occupancy_grid(agents, grid: GridMap) -> np.ndarray:
    """Agent id per cell, -1 where empty."""
    occ = np.full((grid.height, grid.width), -1, dtype=np.int32)
    for a in agents:
        occ[a.location] = a.id
    return occ


def _window(dest: np.ndarray, src: np.ndarray, center: Location, fill):
    """Copy the src window centered at ``center`` into dest, padding with fill."""
    vh, vw = dest.shape
    r0, c0 = center[0] - vh // 2, center[1] - vw // 2
    dest.fill(fill)
    sr0, sc0 = max(r0, 0), max(c0, 0)
    sr1, sc1 = min(r0 + vh, src.shape[0]), min(c0 + vw, src.shape[1])
    if sr0 < sr1 and sc0 < sc1:
        dest[sr0 - r0 : sr1 - r0, sc0 - c0 : sc1 - c0] = src[sr0:sr1, sc0:sc1]


def encode(
    agent,
    agents,
    grid: GridMap,
    field: GuidanceField,
    cfg: ObservationConfig,
    occupancy: np.ndarray | None = None,
) -> Observation:
    """Build one agent's observation.

    ``occupancy`` may be precomputed once per step and shared across agents.
    The observing agent itself is excluded from the dynamic channel (it is
    implicit at the center).
    """
    if field.goal != agent.goal:
        raise ValueError(f"guidance field for goal {field.goal} does not match agent goal {agent.goal}")
    if occupancy is None:
        occupancy = occupancy_grid(agents, grid)
    vh, vw = cfg.fov_h, cfg.fov_w
    cr, cc = cfg.center
    loc = agent.location

    static = np.empty((vh, vw), np.float32)
    _window(static, grid.blocked.astype(np.float32), loc, 1.0)

    ids = np.empty((vh, vw), np.float32)
    _window(ids, occupancy.astype(np.float32), loc, -1.0)
    dynamic = ((ids >= 0) & (ids != agent.id)).astype(np.float32)

    h = np.empty((vh, vw), np.float64)
    _window(h, field.values, loc, np.inf)
    h[static == 1.0] = np.inf
    reachable = np.isfinite(h)

    absolute = np.ones((vh, vw), np.float32)
    absolute[reachable] = (h[reachable] / (grid.height + grid.width)).astype(np.float32)

    relative = np.zeros((vh, vw), np.float32)
    h_center = field.h(loc)
    if np.isfinite(h_center):
        relative[reachable] = ((h[reachable] - h_center) / (vh + vw)).astype(np.float32)

    goal_channel = np.zeros((vh, vw), np.float32)
    gr, gc = agent.goal[0] - loc[0] + cr, agent.goal[1] - loc[1] + cc
    if 0 <= gr < vh and 0 <= gc < vw:
        goal_channel[gr, gc] = 1.0

    offsets = [
        (int(ids[r, c]), r - cr, c - cc)
        for r, c in zip(*np.nonzero(dynamic))
    ]

    return Observation(
        encoder_input=np.stack([static, dynamic, absolute, relative]),
        projection_input=np.stack([static, dynamic, goal_channel]),
        neighbor_offsets=offsets,
    )


class BatchEncoder:
    """Vectorized :func:`encode` over all agents of one grid at once.

    Produces bit-identical channels to per-agent encoding; the only
    difference is that window gathers run as single fancy-indexed reads
    over padded global arrays. Build one per (grid, config) and reuse
    across steps.
    """

    def __init__(self, grid: GridMap, cfg: ObservationConfig):
        self.grid = grid
        self.cfg = cfg
        pr, pc = cfg.fov_h // 2, cfg.fov_w // 2
        self.pad = (pr, pc)
        self._blocked = np.pad(
            grid.blocked.astype(np.float32), ((pr, pr), (pc, pc)), constant_values=1.0
        )
        self._dr = np.arange(cfg.fov_h)[None, :, None]
        self._dc = np.arange(cfg.fov_w)[None, None, :]

    def encode_all(self, agents, fields: list[GuidanceField]) -> list[Observation]:
        grid, cfg = self.grid, self.cfg
        n = len(agents)
        vh, vw = cfg.fov_h, cfg.fov_w
        cr, cc = cfg.center
        pr, pc = self.pad
        for agent, field in zip(agents, fields):
            if field.goal != agent.goal:
                raise ValueError(
                    f"guidance field for goal {field.goal} does not match agent {agent.id} goal {agent.goal}"
                )

        locs = np.array([a.location for a in agents], dtype=np.int64)
        ids = np.array([a.id for a in agents], dtype=np.int32)
        rows = locs[:, 0][:, None, None] + self._dr  # already offset by pad
        cols = locs[:, 1][:, None, None] + self._dc

        static = self._blocked[rows, cols]

        occ = np.full(self._blocked.shape, -1, dtype=np.int32)
        occ[locs[:, 0] + pr, locs[:, 1] + pc] = ids
        ids_win = occ[rows, cols]
        dynamic = ((ids_win >= 0) & (ids_win != ids[:, None, None])).astype(np.float32)

        h = np.full((n, vh, vw), np.inf)
        h_center = np.empty(n)
        for i, (agent, field) in enumerate(zip(agents, fields)):
            r0, c0 = agent.location[0] - cr, agent.location[1] - cc
            sr0, sc0 = max(r0, 0), max(c0, 0)
            sr1 = min(r0 + vh, grid.height)
            sc1 = min(c0 + vw, grid.width)
            if sr0 < sr1 and sc0 < sc1:
                h[i, sr0 - r0 : sr1 - r0, sc0 - c0 : sc1 - c0] = field.values[sr0:sr1, sc0:sc1]
            h_center[i] = field.values[agent.location[0], agent.location[1]]
        h[static == 1.0] = np.inf
        reachable = np.isfinite(h)

        absolute = np.ones((n, vh, vw), np.float32)
        absolute[reachable] = (h[reachable] / (grid.height + grid.width)).astype(np.float32)

        relative = np.zeros((n, vh, vw), np.float32)
        mask = reachable & np.isfinite(h_center)[:, None, None]
        hc = np.broadcast_to(h_center[:, None, None], h.shape)
        relative[mask] = ((h[mask] - hc[mask]) / (vh + vw)).astype(np.float32)

        goal_channel = np.zeros((n, vh, vw), np.float32)
        goals = np.array([a.goal for a in agents], dtype=np.int64)
        gr = goals[:, 0] - locs[:, 0] + cr
        gc = goals[:, 1] - locs[:, 1] + cc
        visible = (gr >= 0) & (gr < vh) & (gc >= 0) & (gc < vw)
        goal_channel[np.nonzero(visible)[0], gr[visible], gc[visible]] = 1.0

        encoder = np.stack([static, dynamic, absolute, relative], axis=1)
        projection = np.stack([static, dynamic, goal_channel], axis=1)

        offsets: dict[int, list[tuple[int, int, int]]] = {}
        for i, r, c in np.argwhere(dynamic == 1.0):
            offsets.setdefault(int(i), []).append((int(ids_win[i, r, c]), int(r - cr), int(c - cc)))

        return [
            Observation(encoder[i], projection[i], offsets.get(i, []))
            for i in range(n)
        ]


class DatasetWriter:
    """Appends records to one dataset file; one writer per file."""

    def __init__(self, path: str | os.PathLike, cfg: ObservationConfig):
        self.cfg = cfg
        self.count = 0
        self._file = open(path, "wb")
        self._file.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, cfg.fov_h, cfg.fov_w))

    def write(self, records: list[DatasetRecord]) -> None:
        vh, vw = self.cfg.fov_h, self.cfg.fov_w
        for rec in records:
            obs = rec.observation
            if obs.encoder_input.shape != (4, vh, vw) or obs.projection_input.shape != (3, vh, vw):
                raise DatasetFormatError("record observation shape does not match writer config")
            self._file.write(
                _RECORD_FIXED.pack(rec.step, rec.agent_id, rec.location[0], rec.location[1], int(rec.label))
            )
            self._file.write(obs.encoder_input.astype("<f4").tobytes())
            self._file.write(obs.projection_input.astype("<f4").tobytes())
            self.count += 1

    def close(self) -> None:
        self._file.flush()
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def record_stride(cfg: ObservationConfig) -> int:
    return _RECORD_FIXED.size + 7 * cfg.fov_h * cfg.fov_w * 4


def read_dataset(path: str | os.PathLike) -> tuple[ObservationConfig, list[DatasetRecord], bool]:
    """Read every complete record; returns (config, records, truncated_tail).

    Neighbor offsets are not stored on disk; read-back observations carry an
    empty list (consumers rebuild joins from the dynamic channel and the
    per-record location).
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise DatasetFormatError("dataset shorter than its header")
    magic, version, vh, vw = _HEADER.unpack_from(data, 0)
    if magic != DATASET_MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    cfg = ObservationConfig(vh, vw)
    stride = record_stride(cfg)
    body = len(data) - _HEADER.size
    n_records = body // stride
    truncated = body % stride != 0

    records = []
    offset = _HEADER.size
    plane = vh * vw
    for _ in range(n_records):
        step, agent_id, row, col, label = _RECORD_FIXED.unpack_from(data, offset)
        offset += _RECORD_FIXED.size
        enc = np.frombuffer(data, dtype="<f4", count=4 * plane, offset=offset).reshape(4, vh, vw)
        offset += 4 * plane * 4
        proj = np.frombuffer(data, dtype="<f4", count=3 * plane, offset=offset).reshape(3, vh, vw)
        offset += 3 * plane * 4
        records.append(
            DatasetRecord(
                observation=Observation(enc.copy(), proj.copy(), []),
                label=Action(label),
                agent_id=agent_id,
                step=step,
                location=(row, col),
            )
        )
    return cfg, records, truncated
