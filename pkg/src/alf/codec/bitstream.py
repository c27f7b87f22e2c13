"""ALF1 bitstream container.

Layout (little-endian)::

    b"ALF1"  u16 version  3 * u16 latent dims (C, H, W)
    8-byte model hash  u32 payload length  payload  u32 CRC-32 of payload

The trailing CRC sits outside the payload; bit-rate accounting counts
payload bytes only.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

MAGIC = b"ALF1"
VERSION = 1
_HEADER = struct.Struct("<4sH3H8sI")


class BitstreamError(ValueError):
    pass


@dataclass(frozen=True)
class Bitstream:
    latent_shape: tuple
    model_hash: bytes
    payload: bytes

    def __post_init__(self):
        if len(self.model_hash) != 8:
            raise ValueError("model hash must be 8 bytes")
        if len(self.latent_shape) != 3:
            raise ValueError("latent shape must be (C, H, W)")

    @property
    def payload_bits(self):
        return 8 * len(self.payload)

    def to_bytes(self):
        head = _HEADER.pack(MAGIC, VERSION, *self.latent_shape, self.model_hash, len(self.payload))
        return head + self.payload + struct.pack("<I", zlib.crc32(self.payload))

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEADER.size + 4:
            raise BitstreamError("stream shorter than header")
        magic, version, c, h, w, mhash, plen = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise BitstreamError("bad magic")
        if version != VERSION:
            raise BitstreamError(f"unsupported bitstream version {version}")
        end = _HEADER.size + plen
        if len(data) != end + 4:
            raise BitstreamError("payload length does not match stream size")
        payload = bytes(data[_HEADER.size:end])
        (crc,) = struct.unpack_from("<I", data, end)
        if crc != zlib.crc32(payload):
            raise BitstreamError("payload checksum mismatch")
        return cls((c, h, w), mhash, payload)

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())
