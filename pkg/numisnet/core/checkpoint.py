"""
NWC1 checkpoint files

Layout (little-endian): magic b"NWC1", u32 topology length, UTF-8 topology
text, then tensor records until end of file. Each record is u32 name length,
name bytes, u32 rank, u32 dims and raw float32 data.
"""

import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from ..errors import CheckpointError, NumisError
from .network import Network, Params
from .topology import NetworkTopology

logger = logging.getLogger(__name__)

MAGIC = b"NWC1"
EXTRA_PREFIX = "input."

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    topology: NetworkTopology
    params: Params
    extras: Dict[str, np.ndarray] = field(default_factory=dict)

    def network(self) -> Network:
        return Network(self.topology, self.params)


def _record(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    data = np.ascontiguousarray(array, dtype="<f4")
    header = struct.pack("<I", len(encoded)) + encoded
    header += struct.pack("<I", data.ndim)
    header += struct.pack(f"<{data.ndim}I", *data.shape)
    return header + data.tobytes()


def save_checkpoint(path: PathLike, topology: NetworkTopology, params: Params,
                    extras: Optional[Dict[str, np.ndarray]] = None):
    """Write a checkpoint atomically; parameters are stored as float32"""
    extras = extras or {}
    for name in extras:
        if not name.startswith(EXTRA_PREFIX):
            raise CheckpointError(f"extra tensor names must start with '{EXTRA_PREFIX}': {name}")
    text = topology.to_text().encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", len(text)), text]
    for name in topology.param_shapes():
        chunks.append(_record(name, params[name]))
    for name in sorted(extras):
        chunks.append(_record(name, extras[name]))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(b"".join(chunks))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug("Saved checkpoint %s", path)


class _Reader:
    def __init__(self, data: bytes, path: PathLike):
        self.data = data
        self.offset = 0
        self.path = path

    @property
    def exhausted(self) -> bool:
        return self.offset >= len(self.data)

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint at byte {self.offset}")
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self, count: int = 1):
        values = struct.unpack(f"<{count}I", self.take(4 * count))
        return values if count != 1 else values[0]


def load_checkpoint(path: PathLike) -> Checkpoint:
    """Read a checkpoint; any damage raises before a model is returned"""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")

    reader = _Reader(data, path)
    magic = reader.take(len(MAGIC))
    if magic != MAGIC:
        if magic[:3] == MAGIC[:3]:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {magic[3:]!r}, expected {MAGIC[3:]!r}")
        raise CheckpointError(f"{path}: not a numisnet checkpoint")

    try:
        topology = NetworkTopology.from_text(reader.take(reader.u32()).decode("utf-8"))
    except (UnicodeDecodeError, NumisError) as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"{path}: bad topology block: {e}")

    tensors: Dict[str, np.ndarray] = {}
    while not reader.exhausted:
        name = reader.take(reader.u32()).decode("utf-8", errors="replace")
        rank = reader.u32()
        dims = reader.u32(rank) if rank != 1 else (reader.u32(),)
        size = int(np.prod(dims)) if rank else 1
        raw = reader.take(4 * size)
        tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)

    params: Params = {}
    for name, shape in topology.param_shapes().items():
        if name not in tensors:
            raise CheckpointError(f"{path}: missing tensor {name} (truncated file?)")
        if tensors[name].shape != shape:
            raise CheckpointError(
                f"{path}: tensor {name} has shape {tensors[name].shape}, topology expects {shape}")
        params[name] = tensors.pop(name)
    unknown = [name for name in tensors if not name.startswith(EXTRA_PREFIX)]
    if unknown:
        raise CheckpointError(f"{path}: unexpected tensors {', '.join(unknown)}")
    return Checkpoint(topology=topology, params=params, extras=tensors)
