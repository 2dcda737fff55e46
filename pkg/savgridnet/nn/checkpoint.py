"""SAVG checkpoint files and their key=value manifests.

Layout (little-endian): b"SAVG", u32 version, u32 record count, then per
record u32 name length, UTF-8 name, u32 rank, rank x u64 dims, f64 payload.
"""

import logging
import struct
from pathlib import Path
from typing import Any, Dict, Mapping

import numpy as np

from ..core.config import format_key_value_text, read_key_value_file
from ..core.errors import ConfigurationError

logger = logging.getLogger(__name__)

MAGIC = b"SAVG"
VERSION = 1
_U32 = struct.Struct("<I")


def manifest_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest")


def save_checkpoint(path: Path, tensors: Mapping[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [MAGIC, _U32.pack(VERSION), _U32.pack(len(tensors))]
    for name, values in tensors.items():
        encoded = name.encode("utf-8")
        array = np.asarray(values, dtype="<f8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(array.ndim))
        chunks.append(np.asarray(array.shape, dtype="<u8").tobytes())
        chunks.append(np.ascontiguousarray(array).tobytes())
    path.write_bytes(b"".join(chunks))
    logger.debug("Saved %d tensors to %s", len(tensors), path)


class _Reader:
    def __init__(self, payload: bytes, path: Path):
        self.payload = payload
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.payload):
            raise ConfigurationError(f"{self.path}: truncated checkpoint")
        chunk = self.payload[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def load_checkpoint(path: Path) -> Dict[str, np.ndarray]:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"Cannot read checkpoint {path}: {exc}") from exc
    reader = _Reader(payload, path)
    if reader.take(4) != MAGIC:
        raise ConfigurationError(f"{path}: not a SAVG checkpoint")
    version = reader.u32()
    if version != VERSION:
        raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u32()
        shape = tuple(int(d) for d in np.frombuffer(reader.take(8 * rank), dtype="<u8"))
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(8 * count), dtype="<f8").reshape(shape)
        tensors[name] = values.astype(np.float64)
    if reader.offset != len(payload):
        raise ConfigurationError(f"{path}: trailing bytes after {len(tensors)} records")
    return tensors


def write_manifest(path: Path, values: Mapping[str, Any]) -> None:
    target = manifest_path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(format_key_value_text(values), encoding="utf-8")


def read_manifest(path: Path) -> Dict[str, Any]:
    target = manifest_path(path)
    if not target.exists():
        raise ConfigurationError(f"Missing model manifest {target}")
    return read_key_value_file(target)
