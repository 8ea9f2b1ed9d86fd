"""Readers/writers for the engine's binary dataset and weight files.

Both formats are little-endian. Datasets (magic ``SILD``): a 10-byte
header {magic, version u16, fov_h u16, fov_w u16} then fixed-stride
records {step u32, agent_id u32, row u16, col u16, label u8, encoder
block 4*V*V f32, projection block 3*V*V f32}. Weights (magic ``SILW``):
{magic, version u16, fov_h u16, fov_w u16, count u32} then per tensor
{name len u16, name, rank u8, dims u32 x rank, f32 data row-major}.

This is an independent implementation of the shared on-disk contract;
the trainer never imports the engine.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

DATASET_MAGIC = b"SILD"
WEIGHTS_MAGIC = b"SILW"
FORMAT_VERSION = 1
_D_HEADER = struct.Struct("<4sHHH")
_D_RECORD = struct.Struct("<IIHHB")
_W_HEADER = struct.Struct("<4sHHHI")

#: Tensor slots of the fixed policy architecture (shared contract).
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


class FormatError(Exception):
    pass


@dataclass
class Record:
    step: int
    agent_id: int
    row: int
    col: int
    label: int
    encoder_input: np.ndarray  # (4, V, V) float32
    projection_input: np.ndarray  # (3, V, V) float32


def read_dataset(path) -> tuple[tuple[int, int], list[Record]]:
    """All complete records; a truncated tail record is silently skipped."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _D_HEADER.size:
        raise FormatError(f"{path}: shorter than the dataset header")
    magic, version, vh, vw = _D_HEADER.unpack_from(data, 0)
    if magic != DATASET_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    plane = vh * vw
    stride = _D_RECORD.size + 7 * plane * 4
    count = (len(data) - _D_HEADER.size) // stride

    records = []
    offset = _D_HEADER.size
    for _ in range(count):
        step, agent_id, row, col, label = _D_RECORD.unpack_from(data, offset)
        offset += _D_RECORD.size
        enc = np.frombuffer(data, "<f4", count=4 * plane, offset=offset).reshape(4, vh, vw)
        offset += 4 * plane * 4
        proj = np.frombuffer(data, "<f4", count=3 * plane, offset=offset).reshape(3, vh, vw)
        offset += 3 * plane * 4
        if label > 4:
            raise FormatError(f"{path}: label {label} out of range")
        records.append(Record(step, agent_id, row, col, label, enc.copy(), proj.copy()))
    return (vh, vw), records


def read_weights(path) -> tuple[dict[str, np.ndarray], tuple[int, int]]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _W_HEADER.size:
        raise FormatError(f"{path}: shorter than the weights header")
    magic, version, vh, vw, count = _W_HEADER.unpack_from(data, 0)
    if magic != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    tensors: dict[str, np.ndarray] = {}
    offset = _W_HEADER.size
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
            tensors[name] = np.frombuffer(data, "<f4", count=size, offset=offset).reshape(dims).copy()
            offset += 4 * size
        except (struct.error, ValueError) as exc:
            raise FormatError(f"{path}: truncated or corrupt: {exc}") from exc
    validate_tensors(tensors)
    return tensors, (vh, vw)


def write_weights(path, tensors: dict[str, np.ndarray], fov: tuple[int, int]) -> None:
    validate_tensors(tensors)
    with open(path, "wb") as f:
        f.write(_W_HEADER.pack(WEIGHTS_MAGIC, FORMAT_VERSION, fov[0], fov[1], len(ARCHITECTURE)))
        for name in ARCHITECTURE:
            tensor = np.ascontiguousarray(tensors[name], dtype="<f4")
            encoded = name.encode()
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", tensor.ndim))
            f.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            f.write(tensor.tobytes())


def validate_tensors(tensors: dict[str, np.ndarray]) -> None:
    missing = set(ARCHITECTURE) - set(tensors)
    extra = set(tensors) - set(ARCHITECTURE)
    if missing or extra:
        raise FormatError(f"tensor set mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
    for name, shape in ARCHITECTURE.items():
        if tuple(tensors[name].shape) != shape:
            raise FormatError(f"{name}: shape {tensors[name].shape}, expected {shape}")
        if not np.isfinite(tensors[name]).all():
            raise FormatError(f"{name}: non-finite values")
