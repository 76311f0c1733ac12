"""Versioned binary checkpoints with byte-identical round-trips.

Layout (all integers little-endian):

    magic   8 bytes  b"KSEGCKPT"
    version u32      currently 1
    header  u64 length + canonical JSON (sorted keys, no whitespace):
            {"best_val_loss": float|null, "config": {...}, "epoch": int}
    params   tensor table
    momentum tensor table
    torch_rng u64 length + opaque bytes
    numpy_rng u64 length + JSON bytes

A tensor table is: u32 entry count, then per entry u16 name length + UTF-8
name, u8 rank, rank x u32 dims, and the raw float32 values. Tables preserve
insertion order, and the header is re-serialized canonically on every save,
so save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (CheckpointTruncatedError, CheckpointVersionError,
                     DataError)
from .model import ModelConfig

MAGIC = b"KSEGCKPT"
VERSION = 1
WEIGHT_TABLE_MAGIC = b"KSEGWTS1"


@dataclass
class CheckpointState:
    config: ModelConfig
    params: dict
    momentum: dict = field(default_factory=dict)
    epoch: int = 0
    best_val_loss: float | None = None
    torch_rng: bytes = b""
    numpy_rng: bytes = b""


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(
                f"{self.source}: file ends {self.pos + n - len(self.data)} "
                f"bytes short of the declared content")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _pack_table(table: dict) -> bytes:
    parts = [struct.pack("<I", len(table))]
    for name, arr in table.items():
        # ascontiguousarray would promote 0-d arrays to 1-d; keep the rank
        arr = np.asarray(arr, dtype="<f4")
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        if arr.ndim:
            parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def _read_table(reader: _Reader) -> dict:
    (count,) = reader.unpack("<I")
    table = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}I") if rank else ()
        n_values = int(np.prod(shape, dtype=np.int64)) if rank else 1
        raw = reader.take(4 * n_values)
        table[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return table


def _as_numpy_table(table: dict) -> dict:
    out = {}
    for name, value in table.items():
        if hasattr(value, "detach"):
            value = value.detach().cpu().numpy()
        out[name] = np.asarray(value, dtype=np.float32)
    return out


def save_checkpoint(state: CheckpointState, path) -> None:
    header = {
        "best_val_loss": state.best_val_loss,
        "config": state.config.to_dict(),
        "epoch": state.epoch,
    }
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    blob = b"".join([
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<Q", len(header_bytes)),
        header_bytes,
        _pack_table(_as_numpy_table(state.params)),
        _pack_table(_as_numpy_table(state.momentum)),
        struct.pack("<Q", len(state.torch_rng)),
        state.torch_rng,
        struct.pack("<Q", len(state.numpy_rng)),
        state.numpy_rng,
    ])
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> CheckpointState:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint file not found: {path}")
    reader = _Reader(path.read_bytes(), str(path))
    magic = reader.take(len(MAGIC))
    if magic != MAGIC:
        raise CheckpointVersionError(
            f"{path}: not a checkpoint file (bad magic {magic!r})")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version} is not supported "
            f"(expected {VERSION})")
    (header_len,) = reader.unpack("<Q")
    header = json.loads(reader.take(header_len).decode("utf-8"))
    params = _read_table(reader)
    momentum = _read_table(reader)
    (n,) = reader.unpack("<Q")
    torch_rng = reader.take(n)
    (n,) = reader.unpack("<Q")
    numpy_rng = reader.take(n)
    return CheckpointState(
        config=ModelConfig.from_dict(header["config"]),
        params=params,
        momentum=momentum,
        epoch=header["epoch"],
        best_val_loss=header["best_val_loss"],
        torch_rng=torch_rng,
        numpy_rng=numpy_rng,
    )


def save_weight_table(table: dict, path) -> None:
    """Standalone parameter table (the external-weight import format)."""
    Path(path).write_bytes(WEIGHT_TABLE_MAGIC
                           + _pack_table(_as_numpy_table(table)))


def load_weight_table(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"weight table file not found: {path}")
    reader = _Reader(path.read_bytes(), str(path))
    magic = reader.take(len(WEIGHT_TABLE_MAGIC))
    if magic != WEIGHT_TABLE_MAGIC:
        raise CheckpointVersionError(
            f"{path}: not a weight table file (bad magic {magic!r})")
    return _read_table(reader)
