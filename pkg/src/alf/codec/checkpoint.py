"""ALFC checkpoint files.

Layout (little-endian)::

    b"ALFC"  u16 version
    u32 metadata length, UTF-8 JSON metadata
    u32 tensor count
    per tensor: u16 name length, name, u8 rank, rank * u32 dims, f32 data
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"ALFC"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    tensors: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def subset(self, prefix):
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    def component_hash(self, *prefixes):
        """SHA-256 over the serialized bytes of tensors whose names start with ``prefixes``."""
        h = hashlib.sha256()
        for name in sorted(self.tensors):
            if prefixes and not name.startswith(prefixes):
                continue
            h.update(_tensor_record(name, self.tensors[name]))
        return h.hexdigest()

    def to_bytes(self):
        meta = json.dumps(self.metadata, sort_keys=True).encode("utf-8")
        parts = [MAGIC, struct.pack("<HI", VERSION, len(meta)), meta,
                 struct.pack("<I", len(self.tensors))]
        parts.extend(_tensor_record(name, self.tensors[name]) for name in sorted(self.tensors))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data):
        try:
            return cls._parse(data)
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            if isinstance(exc, CheckpointError):
                raise
            raise CheckpointError(f"corrupt checkpoint: {exc}") from exc

    @classmethod
    def _parse(cls, data):
        if data[:4] != MAGIC:
            raise CheckpointError("not an ALFC checkpoint")
        version, mlen = struct.unpack_from("<HI", data, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 10
        metadata = json.loads(data[pos:pos + mlen].decode("utf-8"))
        pos += mlen
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            rank = data[pos]
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(dims)
            pos += 4 * n
            tensors[name] = arr.astype(np.float32)
        if pos != len(data):
            raise CheckpointError("trailing bytes after tensor table")
        return cls(tensors, metadata)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(self.to_bytes())
        tmp.replace(path)

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())

    def content_hash(self):
        return hashlib.sha256(self.to_bytes()).hexdigest()


def _tensor_record(name, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    raw = name.encode("utf-8")
    return b"".join([struct.pack("<H", len(raw)), raw, struct.pack("<B", arr.ndim),
                     struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()])
