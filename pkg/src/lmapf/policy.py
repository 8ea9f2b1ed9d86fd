"""Deterministic forward pass of the shared navigation policy.

Architecture (float32 throughout, rectifier activations):

* encoder: Conv3x3(4->32, pad 1) -> relu -> Conv3x3(32->32, pad 1) -> relu
  -> spatial mean-pool -> linear(32->32), producing one 32-feature vector
  per agent from its encoder channel group.
* communication: a 32 x V_h x V_w buffer filled with -1 receives the
  observing agent's own feature vector at the FoV center and each visible
  neighbor's feature vector at that neighbor's relative cell; the
  projection channel group passes through a Conv1x1(3->32) and is added
  element-wise.
* decoder: Conv3x3(32->32, pad 1) -> relu -> Conv3x3(32->32, pad 1) -> relu
  -> center-cell readout -> linear(32->64) -> relu -> linear(64->5)
  -> softmax over the five actions. The decision is read at the acting
  agent's own cell (the FoV center): a global mean would dilute the
  center features by the FoV area and starves learning of gradient.

Feature vectors are computed once per agent per step and shared; the whole
pass is pure given the weights. This module is the canonical numpy
implementation; :mod:`lmapf.accel` provides a semantics-identical
torch-backed fast path for large agent counts.

Weight files (magic ``SILW``) are little-endian: header {magic, version
u16, V_h u16, V_w u16, tensor count u32}, then per tensor {name length
u16, name bytes, rank u8, dims u32 x rank, row-major float32 data}.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import WeightsFormatError
from .observe import Observation, ObservationConfig

FEATURE_DIM = 32
N_ACTIONS = 5

#: Slot name -> tensor shape. Linear weights are (out, in); convolutions
#: are (out, in, kh, kw) applied as cross-correlations.
ARCHITECTURE: dict[str, tuple[int, ...]] = {
    "encoder.conv1.weight": (32, 4, 3, 3),
    "encoder.conv1.bias": (32,),
    "encoder.conv2.weight": (32, 32, 3, 3),
    "encoder.conv2.bias": (32,),
    "encoder.fc.weight": (32, 32),
    "encoder.fc.bias": (32,),
    "comm.proj.weight": (32, 3, 1, 1),
    "comm.proj.bias": (32,),
    "decoder.conv1.weight": (32, 32, 3, 3),
    "decoder.conv1.bias": (32,),
    "decoder.conv2.weight": (32, 32, 3, 3),
    "decoder.conv2.bias": (32,),
    "decoder.fc1.weight": (64, 32),
    "decoder.fc1.bias": (64,),
    "decoder.fc2.weight": (5, 64),
    "decoder.fc2.bias": (5,),
}

WEIGHTS_MAGIC = b"SILW"
WEIGHTS_VERSION = 1
_W_HEADER = struct.Struct("<4sHHHI")


@dataclass
class PolicyWeights:
    """Named tensors for every architecture slot plus FoV metadata."""

    tensors: dict[str, np.ndarray]
    fov_h: int = 11
    fov_w: int = 11

    def __post_init__(self):
        missing = set(ARCHITECTURE) - set(self.tensors)
        extra = set(self.tensors) - set(ARCHITECTURE)
        if missing:
            raise WeightsFormatError(f"missing tensors: {sorted(missing)}")
        if extra:
            raise WeightsFormatError(f"unknown tensors: {sorted(extra)}")
        for name, shape in ARCHITECTURE.items():
            t = self.tensors[name]
            if t.shape != shape:
                raise WeightsFormatError(f"tensor {name} has shape {t.shape}, expected {shape}")
            if not np.isfinite(t).all():
                raise WeightsFormatError(f"tensor {name} contains non-finite values")
            self.tensors[name] = np.ascontiguousarray(t, dtype=np.float32)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def feature_dim(self) -> int:
        return FEATURE_DIM


def zero_weights(fov_h: int = 11, fov_w: int = 11) -> PolicyWeights:
    tensors = {name: np.zeros(shape, np.float32) for name, shape in ARCHITECTURE.items()}
    return PolicyWeights(tensors, fov_h, fov_w)


def random_weights(seed: int = 0, fov_h: int = 11, fov_w: int = 11, scale: float = 0.1) -> PolicyWeights:
    rng = np.random.default_rng(seed)
    tensors = {
        name: (rng.standard_normal(shape) * scale).astype(np.float32)
        for name, shape in ARCHITECTURE.items()
    }
    return PolicyWeights(tensors, fov_h, fov_w)


def save_weights(weights: PolicyWeights, path) -> None:
    with open(path, "wb") as f:
        f.write(_W_HEADER.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION, weights.fov_h,
                               weights.fov_w, len(weights.tensors)))
        for name in ARCHITECTURE:
            tensor = weights.tensors[name]
            encoded = name.encode()
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", tensor.ndim))
            f.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            f.write(tensor.astype("<f4").tobytes())


def load_weights(path) -> PolicyWeights:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _W_HEADER.size:
        raise WeightsFormatError("weight file shorter than its header")
    magic, version, fov_h, fov_w, count = _W_HEADER.unpack_from(data, 0)
    if magic != WEIGHTS_MAGIC:
        raise WeightsFormatError(f"bad magic {magic!r}")
    if version != WEIGHTS_VERSION:
        raise WeightsFormatError(f"unsupported weights version {version}")
    offset = _W_HEADER.size
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset : offset + name_len].decode()
            offset += name_len
            (rank,) = struct.unpack_from("<B", data, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", data, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            tensor = np.frombuffer(data, dtype="<f4", count=size, offset=offset).reshape(dims)
            offset += 4 * size
        except (struct.error, ValueError) as exc:
            raise WeightsFormatError(f"truncated or corrupt weight file: {exc}") from exc
        if name in tensors:
            raise WeightsFormatError(f"duplicate tensor {name}")
        tensors[name] = tensor.copy()
    if offset != len(data):
        raise WeightsFormatError("trailing bytes after the declared tensors")
    return PolicyWeights(tensors, fov_h, fov_w)


def _conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-correlation with 3x3 kernels and zero padding 1."""
    n, _, h, width = x.shape
    out_c = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    acc = np.zeros((out_c, n, h, width), np.float32)
    for dy in range(3):
        for dx in range(3):
            acc += np.tensordot(w[:, :, dy, dx], xp[:, :, dy : dy + h, dx : dx + width], axes=(1, 1))
    return acc.transpose(1, 0, 2, 3) + b[None, :, None, None]


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0, out=x)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def encode_features(obs_stack: np.ndarray, weights: PolicyWeights) -> np.ndarray:
    """Encoder stage: (n, 4, V_h, V_w) -> one feature vector per agent."""
    x = _relu(_conv3x3(obs_stack, weights["encoder.conv1.weight"], weights["encoder.conv1.bias"]))
    x = _relu(_conv3x3(x, weights["encoder.conv2.weight"], weights["encoder.conv2.bias"]))
    pooled = x.mean(axis=(2, 3))
    return pooled @ weights["encoder.fc.weight"].T + weights["encoder.fc.bias"]


def communication_buffer(
    features: np.ndarray, observations: list[Observation], cfg: ObservationConfig
) -> np.ndarray:
    """Place feature vectors at their relative FoV cells; empty cells are -1.

    ``features`` is indexed by agent id; each observation's neighbor ids
    select which feature lands where. The observing agent's own feature
    sits at the center.
    """
    n = len(observations)
    vh, vw = cfg.fov_h, cfg.fov_w
    cr, cc = cfg.center
    buf = np.full((n, FEATURE_DIM, vh, vw), -1.0, np.float32)
    buf[np.arange(n), :, cr, cc] = features
    rows_i, rows_j, rows_r, rows_c = [], [], [], []
    for i, obs in enumerate(observations):
        for j, dr, dc in obs.neighbor_offsets:
            rows_i.append(i)
            rows_j.append(j)
            rows_r.append(cr + dr)
            rows_c.append(cc + dc)
    if rows_i:
        buf[rows_i, :, rows_r, rows_c] = features[rows_j]
    return buf


def forward(observations: list[Observation], weights: PolicyWeights) -> np.ndarray:
    """Action probabilities, one row of 5 per agent.

    Observations must be indexed by agent id (neighbor offsets reference
    positions in this list). Raises on shape mismatches or non-finite
    activations (corrupt weights).
    """
    cfg = ObservationConfig(weights.fov_h, weights.fov_w)
    obs_stack = np.stack([o.encoder_input for o in observations]).astype(np.float32)
    proj_stack = np.stack([o.projection_input for o in observations]).astype(np.float32)
    if obs_stack.shape[1:] != (4, cfg.fov_h, cfg.fov_w):
        raise ValueError(f"encoder input shape {obs_stack.shape[1:]} does not match weights metadata")

    features = encode_features(obs_stack, weights)
    buf = communication_buffer(features, observations, cfg)
    proj = np.tensordot(
        weights["comm.proj.weight"][:, :, 0, 0], proj_stack, axes=(1, 1)
    ).transpose(1, 0, 2, 3) + weights["comm.proj.bias"][None, :, None, None]
    x = buf + proj

    x = _relu(_conv3x3(x, weights["decoder.conv1.weight"], weights["decoder.conv1.bias"]))
    x = _relu(_conv3x3(x, weights["decoder.conv2.weight"], weights["decoder.conv2.bias"]))
    center = x[:, :, cfg.center[0], cfg.center[1]]
    hidden = _relu(center @ weights["decoder.fc1.weight"].T + weights["decoder.fc1.bias"])
    logits = hidden @ weights["decoder.fc2.weight"].T + weights["decoder.fc2.bias"]
    if not np.isfinite(logits).all():
        raise ValueError("non-finite activations; weights are corrupt")
    return _softmax(logits)
