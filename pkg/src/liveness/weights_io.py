"""Bit-exact weight file serialization.

Format (all integers little-endian):
    magic   4 bytes  "LVW1"
    version u32      currently 1
    arch    u32 length + UTF-8 JSON of the architecture config
    tensors repeated until 4 bytes from EOF:
              u32 name length, name bytes,
              u32 rank, u32 dims[rank],
              float32 payload (row-major)
    crc32   u32      CRC-32 of every preceding byte

Tensors are written in model order (parameters and running stats), so a
round trip reproduces the forward pass bit-exactly on the same platform.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ChecksumError, ShapeError, VersionError, WeightFileError
from .model import LivenessModel, build_model, config_from_dict, config_to_dict

MAGIC = b"LVW1"
VERSION = 1


def _serialize(model: LivenessModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    arch = json.dumps(config_to_dict(model.config), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(arch)))
    buf.write(arch)
    for name, arr in model.state_tensors():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    payload = buf.getvalue()
    return payload + struct.pack("<I", zlib.crc32(payload))


def save_weights(model: LivenessModel, sink) -> None:
    """Write the model to a path or binary file object."""
    blob = _serialize(model)
    if hasattr(sink, "write"):
        sink.write(blob)
    else:
        Path(sink).write_bytes(blob)


def _parse_tensors(blob: bytes, offset: int, end: int) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    while offset < end:
        try:
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            raise WeightFileError(f"malformed tensor record: {exc}") from exc
        if offset > end:
            raise WeightFileError("tensor record overruns the file")
        tensors[name] = data.reshape(dims).astype(np.float32)
    return tensors


def load_weights(source) -> LivenessModel:
    """Read a weight file from a path or binary file object.

    Raises ChecksumError on corruption or truncation, VersionError on an
    unknown format version, and ShapeError when the tensor set does not
    match the declared architecture.
    """
    if hasattr(source, "read"):
        blob = source.read()
    else:
        blob = Path(source).read_bytes()
    if len(blob) < len(MAGIC) + 12:
        raise ChecksumError("weight file is truncated")
    if blob[:4] != MAGIC:
        raise WeightFileError(f"bad magic {blob[:4]!r}; not a weight file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise VersionError(f"unsupported weight file version {version}")
    payload, stored = blob[:-4], struct.unpack("<I", blob[-4:])[0]
    actual = zlib.crc32(payload)
    if actual != stored:
        raise ChecksumError(
            f"checksum mismatch: stored {stored:#010x}, computed {actual:#010x}")
    (arch_len,) = struct.unpack_from("<I", blob, 8)
    arch_end = 12 + arch_len
    if arch_end > len(payload):
        raise WeightFileError("architecture blob overruns the file")
    try:
        config = config_from_dict(json.loads(blob[12:arch_end].decode("utf-8")))
    except (json.JSONDecodeError, TypeError, UnicodeDecodeError) as exc:
        raise WeightFileError(f"bad architecture blob: {exc}") from exc

    tensors = _parse_tensors(blob, arch_end, len(payload))
    model = build_model(config, seed=0)
    expected = dict(model.state_tensors())
    missing = sorted(set(expected) - set(tensors))
    extra = sorted(set(tensors) - set(expected))
    if missing or extra:
        raise ShapeError(f"tensor set mismatch: missing={missing}, extra={extra}")
    for name, arr in expected.items():
        loaded = tensors[name]
        if loaded.shape != arr.shape:
            raise ShapeError(
                f"{name}: file shape {loaded.shape} != architecture shape {arr.shape}")
        arr[...] = loaded
    return model


def file_checksum(path) -> str:
    """SHA-256 of the entire file, as hex.

    Not CRC-32: a file that ends with its own CRC-32 (as this format does)
    has the constant whole-file CRC 0x2144df1c, which fingerprints nothing.
    """
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
