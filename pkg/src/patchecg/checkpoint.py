"""Binary checkpoint format.

Layout (little-endian)::

    b"PECG"  u32 version  u32 tensor_count
    per tensor: u16 name_len, name (UTF-8), u8 ndim, u32 dim * ndim, float32 values
    u32 config_len, config (UTF-8 JSON)
"""
import json
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"PECG"
VERSION = 1


class CheckpointError(ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        suffix = f" (at byte offset {offset})" if offset is not None else ""
        super().__init__(message + suffix)


@dataclass
class Checkpoint:
    config: dict  # JSON-serializable snapshot: model, training and dataset settings
    tensors: dict  # name -> float32 array, in parameter order
    version: int = VERSION

    def to_bytes(self):
        parts = [MAGIC, struct.pack("<II", self.version, len(self.tensors))]
        for name, value in self.tensors.items():
            raw_name = name.encode("utf-8")
            arr = np.ascontiguousarray(value, dtype="<f4")
            parts.append(struct.pack("<H", len(raw_name)))
            parts.append(raw_name)
            parts.append(struct.pack("<B", arr.ndim))
            parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            parts.append(arr.tobytes())
        blob = json.dumps(self.config, sort_keys=True).encode("utf-8")
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf):
        reader = _Reader(buf)
        if reader.take(4, "magic") != MAGIC:
            raise CheckpointError("bad magic bytes; not a PECG checkpoint", 0)
        version, count = reader.unpack("<II", "header")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})", 4)
        tensors = {}
        for _ in range(count):
            (name_len,) = reader.unpack("<H", "tensor name length")
            name = reader.take(name_len, "tensor name").decode("utf-8")
            (ndim,) = reader.unpack("<B", f"{name}: ndim")
            shape = reader.unpack(f"<{ndim}I", f"{name}: dims")
            n = int(np.prod(shape)) if ndim else 1
            raw = reader.take(4 * n, f"{name}: values")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
        (blob_len,) = reader.unpack("<I", "config length")
        blob = reader.take(blob_len, "config")
        try:
            config = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise CheckpointError("config blob is not valid UTF-8 JSON", reader.pos - blob_len) from None
        if reader.pos != len(buf):
            raise CheckpointError(f"{len(buf) - reader.pos} trailing bytes", reader.pos)
        return cls(config, tensors, version)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint while reading {what}", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))


def save_checkpoint(checkpoint, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint.to_bytes())


def load_checkpoint(path, expected=None):
    """Read a checkpoint; ``expected`` maps model-config keys to required values."""
    with open(path, "rb") as fh:
        ckpt = Checkpoint.from_bytes(fh.read())
    if expected:
        model_cfg = ckpt.config.get("model", {})
        for key, want in expected.items():
            have = model_cfg.get(key)
            if have != want:
                raise CheckpointError(f"config mismatch for {key}: checkpoint has {have!r}, "
                                      f"configuration demands {want!r}")
    return ckpt
