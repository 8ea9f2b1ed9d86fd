"""The policy network and the reference forward pass.

Mirrors the engine's inference semantics exactly: a small CNN encodes each
agent's 4-channel group into a 32-feature vector; feature vectors are
placed into a -1-filled buffer at the agents' relative FoV cells (own
vector at the center); the 3-channel group is projected with a 1x1
convolution and added; a second CNN feeds a two-layer head reading the
FoV-center cell, decoding 5 action probabilities. State-dict keys equal
the weight-file slot names.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .formats import ARCHITECTURE, validate_tensors

FEATURE_DIM = 32


def _block(**modules) -> nn.Module:
    holder = nn.Module()
    for name, module in modules.items():
        setattr(holder, name, module)
    return holder


class PolicyNet(nn.Module):
    def __init__(self, fov_h: int = 11, fov_w: int = 11):
        super().__init__()
        self.fov_h = fov_h
        self.fov_w = fov_w
        self.encoder = _block(
            conv1=nn.Conv2d(4, 32, 3, padding=1),
            conv2=nn.Conv2d(32, 32, 3, padding=1),
            fc=nn.Linear(32, 32),
        )
        self.comm = _block(proj=nn.Conv2d(3, 32, 1))
        self.decoder = _block(
            conv1=nn.Conv2d(32, 32, 3, padding=1),
            conv2=nn.Conv2d(32, 32, 3, padding=1),
            fc1=nn.Linear(32, 64),
            fc2=nn.Linear(64, 5),
        )

    def features(self, o1: torch.Tensor) -> torch.Tensor:
        x = torch.relu(self.encoder.conv1(o1))
        x = torch.relu(self.encoder.conv2(x))
        return self.encoder.fc(x.mean(dim=(2, 3)))

    def forward(self, o1, o2, placements) -> torch.Tensor:
        """Logits for a batch whose agents may see each other.

        ``placements`` is an integer tensor (k, 4) of rows
        (dst_index, src_index, fov_row, fov_col): feature vector src lands
        in dst's communication buffer at that cell. Self placements at the
        FoV center must be included. Gradients flow to neighbors' encoder
        inputs through their feature vectors.
        """
        f = self.features(o1)
        n = o1.shape[0]
        buf = o1.new_full((n, FEATURE_DIM, self.fov_h, self.fov_w), -1.0)
        if len(placements):
            dst, src, rows, cols = placements.T
            buf[dst, :, rows, cols] = f[src]
        x = buf + self.comm.proj(o2)
        x = torch.relu(self.decoder.conv1(x))
        x = torch.relu(self.decoder.conv2(x))
        # Decision read at the acting agent's own cell; a global mean would
        # dilute the center features by the FoV area.
        center = x[:, :, self.fov_h // 2, self.fov_w // 2]
        hidden = torch.relu(self.decoder.fc1(center))
        return self.decoder.fc2(hidden)


def self_placements(n: int, fov_h: int, fov_w: int) -> np.ndarray:
    idx = np.arange(n, dtype=np.int64)
    center = np.array([fov_h // 2, fov_w // 2], dtype=np.int64)
    return np.stack([idx, idx, np.full(n, center[0]), np.full(n, center[1])], axis=1)


def load_tensors(net: PolicyNet, tensors: dict[str, np.ndarray]) -> PolicyNet:
    validate_tensors(tensors)
    net.load_state_dict({k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in tensors.items()})
    return net


def export_tensors(net: PolicyNet) -> dict[str, np.ndarray]:
    out = {k: v.detach().cpu().numpy().astype(np.float32) for k, v in net.state_dict().items()}
    assert set(out) == set(ARCHITECTURE)
    return out


def reference_forward(observations, weights) -> np.ndarray:
    """Action probabilities for a list of observation-like objects.

    Each observation needs ``encoder_input`` (4, V, V), ``projection_input``
    (3, V, V) and ``neighbor_offsets`` [(agent_index, d_row, d_col), ...]
    where agent_index addresses this list. ``weights`` is a slot-name ->
    array mapping (or a PolicyNet). Serves as the engine's independent
    cross-implementation oracle.
    """
    o1 = np.stack([np.asarray(o.encoder_input, dtype=np.float32) for o in observations])
    o2 = np.stack([np.asarray(o.projection_input, dtype=np.float32) for o in observations])
    n, _, vh, vw = o1.shape
    if isinstance(weights, PolicyNet):
        net = weights
    else:
        net = load_tensors(PolicyNet(vh, vw), dict(weights))
    rows = [self_placements(n, vh, vw)]
    for i, obs in enumerate(observations):
        for j, dr, dc in obs.neighbor_offsets:
            rows.append(np.array([[i, j, vh // 2 + dr, vw // 2 + dc]], dtype=np.int64))
    placements = torch.from_numpy(np.concatenate(rows))
    with torch.no_grad():
        logits = net(torch.from_numpy(o1), torch.from_numpy(o2), placements)
        probs = torch.softmax(logits, dim=1)
    return probs.numpy()
