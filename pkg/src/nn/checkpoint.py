"""Binary checkpoint files; byte layout in docs/checkpoint_format.md."""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from src.nn.modules import Module
from src.nn.tensor import ShapeError

MAGIC = b"VTBCKPT\x00"
FORMAT_VERSION = 1
_PAYLOAD_DTYPE = np.dtype("<f4")


def _encode(state: dict[str, np.ndarray]) -> bytes:
    header = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(state))]
    payloads = []
    for name in sorted(state):
        array = np.asarray(state[name])
        encoded = name.encode("utf-8")
        header.append(struct.pack("<H", len(encoded)))
        header.append(encoded)
        header.append(struct.pack("<B", array.ndim))
        header.append(struct.pack(f"<{array.ndim}I", *array.shape))
        payloads.append(np.ascontiguousarray(array, dtype=_PAYLOAD_DTYPE).tobytes())
    return b"".join(header + payloads)


def _decode(blob: bytes) -> dict[str, np.ndarray]:
    if blob[: len(MAGIC)] != MAGIC:
        raise ShapeError("not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    version, count = struct.unpack_from("<II", blob, offset)
    offset += 8
    if version != FORMAT_VERSION:
        raise ShapeError(f"unsupported checkpoint version {version}")

    entries: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        entries.append((name, tuple(shape)))

    state = {}
    for name, shape in entries:
        size = int(np.prod(shape, dtype=np.int64))
        array = np.frombuffer(blob, dtype=_PAYLOAD_DTYPE, count=size, offset=offset)
        state[name] = array.reshape(shape).astype(np.float32)
        offset += size * _PAYLOAD_DTYPE.itemsize
    if offset != len(blob):
        raise ShapeError(f"checkpoint has {len(blob) - offset} trailing bytes")
    return state


def save_checkpoint(module: Module, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(_encode(module.state_dict()))
    tmp.replace(path)
    return path


def load_checkpoint(module: Module, path: str | Path) -> Module:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found at: {path}")
    module.load_state_dict(_decode(path.read_bytes()))
    return module


def state_hash(module: Module) -> str:
    """sha256 of the serialized parameters and buffers."""
    return hashlib.sha256(_encode(module.state_dict())).hexdigest()
